// Times the OpenMP convolution kernels against the serial path and the naive
// reference, then a full desk-scale WRoIM training step. Thread count comes
// from OMP_NUM_THREADS.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "fundus/data.hpp"
#include "fundus/kernels.hpp"
#include "fundus/kernels_ref.hpp"
#include "fundus/models.hpp"
#include "fundus/rng.hpp"
#include "fundus/train.hpp"

using namespace fundus;

namespace {

double time_ms(const std::function<void()>& f, int reps) {
    f();  // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) f();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() /
           reps;
}

std::vector<float> randf(Rng& rng, std::size_t n) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
    return v;
}

void bench_conv(int cin, int cout, int hw, int k, int reps) {
    Rng rng(123);
    auto in = randf(rng, static_cast<std::size_t>(cin) * hw * hw);
    auto w = randf(rng, static_cast<std::size_t>(cout) * cin * k * k);
    auto b = randf(rng, cout);
    auto gout = randf(rng, static_cast<std::size_t>(cout) * hw * hw);
    std::vector<float> out(gout.size()), gin(in.size()), gw(w.size()), gb(b.size());

    const double flops_fwd = 2.0 * hw * hw * cout * cin * k * k;

    struct Row {
        const char* name;
        std::function<void()> fn;
    };
    const Row rows[] = {
        {"forward", [&] { kernels::conv2d_forward(in.data(), cin, hw, hw, w.data(), cout, k, b.data(), out.data()); }},
        {"backward_input", [&] { kernels::conv2d_backward_input(gout.data(), w.data(), cin, hw, hw, cout, k, gin.data()); }},
        {"backward_params", [&] { kernels::conv2d_backward_params(gout.data(), in.data(), cin, hw, hw, cout, k, gw.data(), gb.data()); }},
    };

    std::printf("conv %dx%dx%d -> %d, k=%d\n", cin, hw, hw, cout, k);
    for (const auto& r : rows) {
        kernels::set_parallel(false);
        const double serial = time_ms(r.fn, reps);
        kernels::set_parallel(true);
        const double parallel = time_ms(r.fn, reps);
        std::printf("  %-16s serial %8.3f ms   omp %8.3f ms   speedup %4.2fx   %6.2f GFLOP/s\n",
                    r.name, serial, parallel, serial / parallel,
                    flops_fwd / (parallel * 1e6));
    }
    kernels::set_parallel(true);
    std::vector<float> out_ref(out.size());
    const double naive = time_ms(
        [&] { kernels_ref::conv2d_forward(in.data(), cin, hw, hw, w.data(), cout, k, b.data(), out_ref.data()); },
        std::max(1, reps / 4));
    std::printf("  %-16s        %8.3f ms (textbook reference forward)\n", "naive", naive);
}

void bench_train_step() {
    models::ModelConfig cfg;  // desk WRoIM
    cfg.kind = models::Kind::wroim;
    auto net = models::build_network<float>(cfg, 7);
    auto samples = data::gen_synthetic(1, 7, cfg.frame);
    const auto& s = samples[0];

    auto step = [&] {
        Tape<float> tape;
        auto out = net->forward(&tape, s.image);
        auto loss = net->loss(out, s.disc, s.cup, 1e-5f, 1.0f);
        net->params().zero_grad();
        tape.backward(loss);
        train::sgd_step(net->params(), 1e-3, 0.95);
    };
    kernels::set_parallel(false);
    const double serial = time_ms(step, 3);
    kernels::set_parallel(true);
    const double parallel = time_ms(step, 3);
    std::printf("wroim desk train step (N=%d): serial %7.1f ms   omp %7.1f ms   speedup %4.2fx\n",
                cfg.frame, serial, parallel, serial / parallel);
}

}  // namespace

int main() {
    std::printf("OpenMP max threads: %d\n\n", omp_get_max_threads());
    bench_conv(16, 16, 64, 3, 10);
    bench_conv(32, 32, 32, 3, 10);
    bench_conv(16, 16, 128, 3, 5);
    std::printf("\n");
    bench_train_step();
    return 0;
}
