#include "fundus/checkgrad.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include "fundus/metrics.hpp"
#include "fundus/models.hpp"
#include "fundus/nn.hpp"
#include "fundus/ops.hpp"

namespace fundus::checkgrad {

double check_case(const LossFn& f, ParamStore<double>& params, Rng& rng, int max_coords) {
    Tape<double> tape;
    Tensor<double> loss = f(&tape, params);
    params.zero_grad();
    tape.backward(loss);

    // Snapshot analytic gradients before perturbing values.
    std::vector<std::vector<double>> analytic(params.size());
    for (std::size_t p = 0; p < params.size(); ++p) analytic[p] = params.at(p).grad;

    std::vector<std::pair<int, int>> coords;
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::int64_t e = 0; e < params.at(p).numel(); ++e)
            coords.emplace_back(static_cast<int>(p), static_cast<int>(e));
    if (max_coords > 0 && static_cast<int>(coords.size()) > max_coords) {
        rng.shuffle(coords);
        coords.resize(max_coords);
    }

    const double h = 1e-5;
    double worst = 0;
    for (auto [p, e] : coords) {
        double& v = params.at(p).value[e];
        const double saved = v;
        v = saved + h;
        const double lp = f(nullptr, params).item();
        v = saved - h;
        const double lm = f(nullptr, params).item();
        v = saved;
        const double fd = (lp - lm) / (2 * h);
        const double a = analytic[p][e];
        const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 0.01});
        worst = std::max(worst, rel);
    }
    return worst;
}

namespace {

using ops::add;
using ops::mul;
using ops::sum;

Tensor<double> rand_const(Rng& rng, std::vector<int> shape, double lo = -1, double hi = 1) {
    std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor<double>::from(std::move(shape), std::move(v));
}

Param<double>& add_param(ParamStore<double>& s, const std::string& name, std::vector<int> shape,
                         Rng& rng, double lo = -1, double hi = 1) {
    auto& p = s.add(name, std::move(shape));
    for (auto& x : p.value) x = rng.uniform(lo, hi);
    return p;
}

// Values with pairwise gaps well above the FD step, so kinks (relu zero,
// maxpool ties) stay away from the probe points.
void spread_values(Param<double>& p, Rng& rng, double step = 0.01) {
    std::vector<int> order(p.value.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i)
        p.value[i] = (order[i] - static_cast<int>(order.size()) / 2) * step + step / 3;
}

MaskImage rand_mask(Rng& rng, int h, int w, double density = 0.4) {
    MaskImage m(h, w);
    for (auto& v : m.v) v = rng.uniform() < density ? 1 : 0;
    return m;
}

struct Case {
    std::string name;
    std::function<double(Rng&)> run;  // returns max relative error over its shapes
};

// Runs `f` on `shapes` freshly drawn small tensors; every op case goes
// through at least 20 random shapes.
template <typename MakeCase>
double over_shapes(Rng& rng, int shapes, MakeCase make) {
    double worst = 0;
    for (int s = 0; s < shapes; ++s) {
        ParamStore<double> params;
        LossFn f = make(params, rng, s);
        worst = std::max(worst, check_case(f, params, rng));
    }
    return worst;
}

int rand_dim(Rng& rng, int lo, int hi, int mult = 1) {
    const int span = (hi - lo) / mult + 1;
    return lo + static_cast<int>(rng.uniform_int(span)) * mult;
}

std::vector<Case> build_registry() {
    std::vector<Case> reg;

    reg.push_back({"conv2d", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            const int cin = rand_dim(rng, 1, 3), cout = rand_dim(rng, 1, 3);
            const int h = rand_dim(rng, 2, 6), w = rand_dim(rng, 2, 6);
            const int k = rng.coin() ? 3 : 1;
            add_param(s, "x", {cin, h, w}, rng);
            add_param(s, "w", {cout, cin, k, k}, rng);
            add_param(s, "b", {cout}, rng);
            auto r = rand_const(rng, {cout, h, w});
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::conv2d(nn::bind(t, *p.find("x")), nn::bind(t, *p.find("w")),
                                           nn::bind(t, *p.find("b"))),
                               r));
            };
        });
    }});

    reg.push_back({"relu", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            auto& x = add_param(s, "x", {rand_dim(rng, 1, 2), rand_dim(rng, 2, 5), rand_dim(rng, 2, 5)}, rng);
            spread_values(x, rng);
            auto r = rand_const(rng, x.shape);
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::relu(nn::bind(t, *p.find("x"))), r));
            };
        });
    }});

    reg.push_back({"sigmoid", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            add_param(s, "x", {rand_dim(rng, 1, 2), rand_dim(rng, 2, 5), rand_dim(rng, 2, 5)}, rng, -3, 3);
            auto r = rand_const(rng, s.find("x")->shape);
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::sigmoid(nn::bind(t, *p.find("x"))), r));
            };
        });
    }});

    reg.push_back({"softmax_channels", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            add_param(s, "x", {rand_dim(rng, 2, 4), rand_dim(rng, 2, 4), rand_dim(rng, 2, 4)}, rng, -2, 2);
            auto r = rand_const(rng, s.find("x")->shape);
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::softmax_channels(nn::bind(t, *p.find("x"))), r));
            };
        });
    }});

    reg.push_back({"maxpool2", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            auto& x = add_param(s, "x", {rand_dim(rng, 1, 2), rand_dim(rng, 2, 6, 2), rand_dim(rng, 2, 6, 2)}, rng);
            spread_values(x, rng);
            auto r = rand_const(rng, {x.shape[0], x.shape[1] / 2, x.shape[2] / 2});
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::maxpool2(nn::bind(t, *p.find("x"))), r));
            };
        });
    }});

    reg.push_back({"upsample2", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            auto& x = add_param(s, "x", {rand_dim(rng, 1, 2), rand_dim(rng, 1, 4), rand_dim(rng, 1, 4)}, rng);
            auto r = rand_const(rng, {x.shape[0], x.shape[1] * 2, x.shape[2] * 2});
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::upsample2(nn::bind(t, *p.find("x"))), r));
            };
        });
    }});

    reg.push_back({"concat_channels", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            const int h = rand_dim(rng, 2, 4), w = rand_dim(rng, 2, 4);
            auto& a = add_param(s, "a", {rand_dim(rng, 1, 2), h, w}, rng);
            auto& b = add_param(s, "b", {rand_dim(rng, 1, 2), h, w}, rng);
            auto r = rand_const(rng, {a.shape[0] + b.shape[0], h, w});
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::concat_channels(nn::bind(t, *p.find("a")), nn::bind(t, *p.find("b"))), r));
            };
        });
    }});

    reg.push_back({"slice_channels", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            const int c = rand_dim(rng, 2, 4);
            auto& x = add_param(s, "x", {c, rand_dim(rng, 2, 4), rand_dim(rng, 2, 4)}, rng);
            const int c0 = static_cast<int>(rng.uniform_int(c));
            const int count = 1 + static_cast<int>(rng.uniform_int(c - c0));
            auto r = rand_const(rng, {count, x.shape[1], x.shape[2]});
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::slice_channels(nn::bind(t, *p.find("x")), c0, count), r));
            };
        });
    }});

    reg.push_back({"crop_spatial", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            const int h = rand_dim(rng, 3, 6), w = rand_dim(rng, 3, 6);
            auto& x = add_param(s, "x", {rand_dim(rng, 1, 2), h, w}, rng);
            CropWindow win;
            win.height = 1 + static_cast<int>(rng.uniform_int(h));
            win.width = 1 + static_cast<int>(rng.uniform_int(w));
            win.row0 = static_cast<int>(rng.uniform_int(h - win.height + 1));
            win.col0 = static_cast<int>(rng.uniform_int(w - win.width + 1));
            auto r = rand_const(rng, {x.shape[0], win.height, win.width});
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::crop_spatial(nn::bind(t, *p.find("x")), win), r));
            };
        });
    }});

    reg.push_back({"pad_to_frame", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            const int fh = rand_dim(rng, 3, 6), fw = rand_dim(rng, 3, 6);
            CropWindow win;
            win.height = 1 + static_cast<int>(rng.uniform_int(fh));
            win.width = 1 + static_cast<int>(rng.uniform_int(fw));
            win.row0 = static_cast<int>(rng.uniform_int(fh - win.height + 1));
            win.col0 = static_cast<int>(rng.uniform_int(fw - win.width + 1));
            auto& x = add_param(s, "x", {rand_dim(rng, 1, 2), win.height, win.width}, rng);
            auto r = rand_const(rng, {x.shape[0], fh, fw});
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::pad_to_frame(nn::bind(t, *p.find("x")), win, fh, fw), r));
            };
        });
    }});

    auto binary_case = [](const char* name, auto opfn, double blo, double bhi) {
        return Case{name, [=](Rng& rng) {
            return over_shapes(rng, 20, [=](ParamStore<double>& s, Rng& rng, int) -> LossFn {
                std::vector<int> shape{rand_dim(rng, 1, 2), rand_dim(rng, 2, 4), rand_dim(rng, 2, 4)};
                add_param(s, "a", shape, rng);
                add_param(s, "b", shape, rng, blo, bhi);
                auto r = rand_const(rng, shape);
                return [=](Tape<double>* t, ParamStore<double>& p) {
                    return sum(mul(opfn(nn::bind(t, *p.find("a")), nn::bind(t, *p.find("b"))), r));
                };
            });
        }};
    };
    reg.push_back(binary_case("add", [](auto a, auto b) { return ops::add(a, b); }, -1, 1));
    reg.push_back(binary_case("mul", [](auto a, auto b) { return ops::mul(a, b); }, -1, 1));
    // denominator kept away from zero
    reg.push_back(binary_case("div", [](auto a, auto b) { return ops::div(a, b); }, 0.5, 1.5));

    reg.push_back({"sum", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            add_param(s, "x", {rand_dim(rng, 1, 3), rand_dim(rng, 1, 5), rand_dim(rng, 1, 5)}, rng);
            return [](Tape<double>* t, ParamStore<double>& p) {
                return sum(nn::bind(t, *p.find("x")));
            };
        });
    }});

    reg.push_back({"scale", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            add_param(s, "x", {rand_dim(rng, 1, 2), rand_dim(rng, 2, 4), rand_dim(rng, 2, 4)}, rng);
            const double c = rng.uniform(-2, 2);
            auto r = rand_const(rng, s.find("x")->shape);
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::scale(nn::bind(t, *p.find("x")), c), r));
            };
        });
    }});

    reg.push_back({"add_const", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            add_param(s, "x", {rand_dim(rng, 1, 2), rand_dim(rng, 2, 4), rand_dim(rng, 2, 4)}, rng);
            const double c = rng.uniform(-2, 2);
            auto r = rand_const(rng, s.find("x")->shape);
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::add_const(nn::bind(t, *p.find("x")), c), r));
            };
        });
    }});

    reg.push_back({"neg_log_floored", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            add_param(s, "x", {rand_dim(rng, 1, 2), rand_dim(rng, 2, 4), rand_dim(rng, 2, 4)}, rng, 0.2, 2.0);
            auto r = rand_const(rng, s.find("x")->shape);
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return sum(mul(ops::neg_log_floored(nn::bind(t, *p.find("x")), 1e-7), r));
            };
        });
    }});

    reg.push_back({"dice_loss", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            const int h = rand_dim(rng, 2, 6), w = rand_dim(rng, 2, 6);
            add_param(s, "pred", {1, h, w}, rng, 0.05, 0.95);
            auto gt = std::make_shared<MaskImage>(rand_mask(rng, h, w));
            return [=](Tape<double>* t, ParamStore<double>& p) {
                return metrics::log_dice_loss_graph(nn::bind(t, *p.find("pred")), *gt, 1e-5);
            };
        });
    }});

    reg.push_back({"multi_channel_loss", [](Rng& rng) {
        return over_shapes(rng, 20, [](ParamStore<double>& s, Rng& rng, int) -> LossFn {
            const int h = rand_dim(rng, 2, 5), w = rand_dim(rng, 2, 5);
            add_param(s, "logits", {3, h, w}, rng, -1.5, 1.5);
            // random 3-way partition
            auto bg = std::make_shared<MaskImage>(h, w);
            auto cup = std::make_shared<MaskImage>(h, w);
            auto rim = std::make_shared<MaskImage>(h, w);
            for (int e = 0; e < h * w; ++e) {
                switch (rng.uniform_int(3)) {
                    case 0: bg->v[e] = 1; break;
                    case 1: cup->v[e] = 1; break;
                    default: rim->v[e] = 1; break;
                }
            }
            return [=](Tape<double>* t, ParamStore<double>& p) {
                auto pred3 = ops::softmax_channels(nn::bind(t, *p.find("logits")));
                return metrics::multi_channel_loss_graph<double>({bg.get(), cup.get(), rim.get()},
                                                                 pred3, 1e-5);
            };
        });
    }});

    // Composite end-to-end cases on toy frames. The RoI-producing head biases
    // are forced low so the thresholded mask is empty and the degenerate
    // (frame-center, fixed) window keeps the pipeline differentiable.
    auto model_case = [](const char* name, models::Kind kind, const char* roi_head_bias) {
        return Case{name, [=](Rng& rng) {
            models::ModelConfig cfg;
            cfg.kind = kind;
            cfg.frame = 16;
            cfg.crop_base = 8;
            cfg.depth = 2;
            cfg.base_channels = 4;
            cfg.convs_per_block = 1;
            cfg.weak_base_channels = 2;
            double worst = 0;
            for (int rep = 0; rep < 2; ++rep) {
                auto net = models::build_network<double>(cfg, rng.next_u64());
                if (roi_head_bias)
                    for (auto& v : net->params().find(roi_head_bias)->value) v = -4.0;
                auto image = std::make_shared<Tensor<double>>(rand_const(rng, {3, cfg.frame, cfg.frame}, 0, 1));
                auto gt_disc = std::make_shared<MaskImage>(rand_mask(rng, cfg.frame, cfg.frame, 0.3));
                auto gt_cup = std::make_shared<MaskImage>(*gt_disc);  // cup subset of disc
                for (std::size_t e = 0; e < gt_cup->v.size(); ++e)
                    if (e % 3 == 0) gt_cup->v[e] = 0;
                auto* netp = net.get();
                LossFn f = [=](Tape<double>* t, ParamStore<double>&) {
                    auto out = netp->forward(t, *image);
                    return netp->loss(out, *gt_disc, *gt_cup, 1e-5, 1.0);
                };
                worst = std::max(worst, check_case(f, net->params(), rng, 80));
            }
            return worst;
        }};
    };
    reg.push_back(model_case("psbn_forward", models::Kind::psbn, "disc_dec.head.b"));
    reg.push_back(model_case("wroim_forward", models::Kind::wroim, "weak.dec.head.b"));
    reg.push_back(model_case("twomodel_forward", models::Kind::twomodel, nullptr));

    return reg;
}

}  // namespace

std::vector<CaseResult> run_all(std::uint64_t seed, std::ostream& out) {
    std::vector<CaseResult> results;
    auto registry = build_registry();
    for (std::size_t i = 0; i < registry.size(); ++i) {
        Rng rng(derive_seed(seed, "checkgrad", i));
        CaseResult r;
        r.name = registry[i].name;
        r.max_rel_err = registry[i].run(rng);
        r.pass = r.max_rel_err < kTolerance;
        out << std::left << std::setw(20) << r.name << " max_rel_err=" << std::scientific
            << std::setprecision(3) << r.max_rel_err << (r.pass ? "  PASS" : "  FAIL") << "\n";
        results.push_back(r);
    }
    return results;
}

}  // namespace fundus::checkgrad
