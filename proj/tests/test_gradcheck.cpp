#include <doctest.h>

#include <set>
#include <sstream>

#include "fundus/checkgrad.hpp"
#include "fundus/ops.hpp"

using namespace fundus;

TEST_CASE("finite differences pass for every registered op and model") {
    std::ostringstream out;
    auto results = checkgrad::run_all(42, out);
    REQUIRE(!results.empty());

    std::set<std::string> names;
    for (const auto& r : results) {
        INFO(r.name, " max_rel_err=", r.max_rel_err);
        CHECK(r.pass);
        CHECK(names.insert(r.name).second);  // listed exactly once
    }
    // every differentiable op appears, plus the composite model forwards
    for (const char* expected :
         {"conv2d", "relu", "sigmoid", "softmax_channels", "maxpool2", "upsample2",
          "concat_channels", "slice_channels", "crop_spatial", "pad_to_frame", "add", "mul",
          "div", "sum", "scale", "add_const", "neg_log_floored", "dice_loss",
          "multi_channel_loss", "psbn_forward", "wroim_forward", "twomodel_forward"})
        CHECK_MESSAGE(names.count(expected) == 1, expected);
}

namespace {

// Doubles the input but back-propagates the wrong sign; exercises the
// harness's ability to catch a broken gradient.
Tensor<double> broken_double(const Tensor<double>& x) {
    Tensor<double> out = Tensor<double>::zeros(x.shape);
    for (std::size_t e = 0; e < out.data->size(); ++e) (*out.data)[e] = 2.0 * (*x.data)[e];
    if (x.node >= 0) {
        out.tape = x.tape;
        out.node = x.tape->add_node(out.numel(), nullptr);
        const int id = out.node;
        x.tape->set_back(id, [=](Tape<double>& t) {
            const auto& go = t.grad(id);
            auto& gx = t.grad(x.node);
            for (std::size_t e = 0; e < go.size(); ++e) gx[e] -= 2.0 * go[e];  // wrong sign
        });
    }
    return out;
}

}  // namespace

TEST_CASE("the harness flags an injected sign bug") {
    ParamStore<double> params;
    auto& p = params.add("x", {2, 2});
    p.value = {0.3, -0.7, 1.1, 0.2};
    Rng rng(5);
    auto f = [](Tape<double>* t, ParamStore<double>& s) {
        Tensor<double> x = t ? t->leaf(*s.find("x")) : Tensor<double>::view(s.find("x")->shape, &s.find("x")->value);
        return ops::sum(broken_double(x));
    };
    CHECK(checkgrad::check_case(f, params, rng) > checkgrad::kTolerance);
}
