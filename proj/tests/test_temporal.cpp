#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>

#include "qtg/losses.hpp"
#include "qtg/temporal_ar.hpp"

using namespace qtg;

namespace {

ModelConfig tiny_model() {
    ModelConfig cfg;
    cfg.feature_dim = 5;
    cfg.type_embed_dim = 4;
    cfg.n_types = 2;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 12;
    cfg.n_layers = 1;
    cfg.dropout = 0.0;
    cfg.ta_dropout = 0.0;
    return cfg;
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    Tensor t = Tensor::zeros({r, c});
    for (double& v : t.data) v = rng.uniform(-1, 1);
    return t;
}

struct Fixture {
    ModelConfig cfg = tiny_model();
    ParamStore params;
    Tensor cond_f, cond_g;

    explicit Fixture(std::uint64_t seed) {
        params = init_params(cfg, seed);
        Rng rng(seed ^ 0xabcd);
        cond_f = random_matrix(rng, 1, 8);
        cond_g = random_matrix(rng, 1, 8);
    }

    Tensor future(const Tensor& frames) const {
        Tape tape;
        Bound b = bind_params(tape, params, false);
        return predict_future(tape, b, cfg, frames, tape.constant(cond_f), tape.constant(cond_g))
            .val();
    }

    Tensor recon(const Tensor& frames, const MaskPlan& plan) const {
        Tape tape;
        Bound b = bind_params(tape, params, false);
        auto out = reconstruct_masked(tape, b, cfg, frames, plan, tape.constant(cond_f),
                                      tape.constant(cond_g));
        REQUIRE(out.has_value());
        return out->val();
    }
};

}  // namespace

TEST_CASE("make_mask_plan sizes and determinism") {
    CHECK(make_mask_plan(16, 0.0, 1).masked_indices.empty());

    const MaskPlan capped = make_mask_plan(10, 1.0, 2);
    CHECK(capped.masked_indices.size() == 9);  // one unmasked survivor

    const MaskPlan p1 = make_mask_plan(10, 0.15, 3);
    CHECK(p1.masked_indices.size() == 2);  // round(1.5) = 2
    const MaskPlan p2 = make_mask_plan(10, 0.15, 3);
    CHECK(p1.masked_indices == p2.masked_indices);

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const MaskPlan p = make_mask_plan(12, 0.4, seed);
        CHECK(p.masked_indices.size() == 5);
        std::set<std::size_t> unique(p.masked_indices.begin(), p.masked_indices.end());
        CHECK(unique.size() == p.masked_indices.size());
        for (std::size_t m : p.masked_indices) CHECK(m < 12);
        for (std::size_t i = 1; i < p.masked_indices.size(); ++i) {
            CHECK(p.masked_indices[i - 1] < p.masked_indices[i]);
        }
    }

    CHECK_THROWS_AS(make_mask_plan(0, 0.5, 1), ContractError);
    CHECK_THROWS_AS(make_mask_plan(4, 1.5, 1), ContractError);
}

TEST_CASE("predict_future is causal: perturbing frame j leaves positions <= j unchanged") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Fixture fix(seed);
        Rng rng(900 + seed);
        const std::size_t T = 6;
        Tensor frames = random_matrix(rng, T, 5);
        const Tensor base = fix.future(frames);

        const std::size_t j = rng.below(T);
        Tensor poked = frames;
        for (std::size_t c = 0; c < 5; ++c) poked.at(j, c) += rng.uniform(-2.0, 2.0);
        const Tensor out = fix.future(poked);

        for (std::size_t i = 0; i <= j; ++i) {
            for (std::size_t c = 0; c < 5; ++c) {
                CHECK(out.at(i, c) == base.at(i, c));  // exact equality
            }
        }
        // Later positions do react (otherwise the head would ignore frames).
        bool changed = false;
        for (std::size_t i = j + 1; i < T && !changed; ++i)
            for (std::size_t c = 0; c < 5; ++c) changed = changed || out.at(i, c) != base.at(i, c);
        if (j + 1 < T) CHECK(changed);
    }
}

TEST_CASE("predict_future position 0 depends only on the conditioning") {
    Fixture fix(3);
    Rng rng(31);
    Tensor a = random_matrix(rng, 5, 5);
    Tensor b = random_matrix(rng, 5, 5);
    const Tensor out_a = fix.future(a);
    const Tensor out_b = fix.future(b);
    for (std::size_t c = 0; c < 5; ++c) CHECK(out_a.at(0, c) == out_b.at(0, c));
}

TEST_CASE("predict_future contract checks") {
    Fixture fix(4);
    Tape tape;
    Bound b = bind_params(tape, fix.params, false);
    CHECK_THROWS_AS(predict_future(tape, b, fix.cfg, Tensor::zeros({1, 5}),
                                   tape.constant(fix.cond_f), tape.constant(fix.cond_g)),
                    ContractError);
    CHECK_THROWS_AS(predict_future(tape, b, fix.cfg, Tensor::zeros({4, 3}),
                                   tape.constant(fix.cond_f), tape.constant(fix.cond_g)),
                    ContractError);

    Rng rng(5);
    const Tensor frames = random_matrix(rng, 4, 5);
    const Tensor o1 = fix.future(frames);
    const Tensor o2 = fix.future(frames);
    CHECK(o1.data == o2.data);  // determinism
}

TEST_CASE("reconstruct_masked never reads the true masked values") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        Fixture fix(seed + 100);
        Rng rng(700 + seed);
        const std::size_t T = 7;
        Tensor frames = random_matrix(rng, T, 5);
        const MaskPlan plan = make_mask_plan(T, 0.3, seed);
        REQUIRE(!plan.empty());
        const Tensor base = fix.recon(frames, plan);

        Tensor poked = frames;
        for (std::size_t m : plan.masked_indices) {
            for (std::size_t c = 0; c < 5; ++c) poked.at(m, c) = rng.uniform(-50.0, 50.0);
        }
        const Tensor out = fix.recon(poked, plan);
        CHECK(out.data == base.data);  // exact equality

        // Context frames do matter.
        Tensor context_poke = frames;
        for (std::size_t t = 0; t < T; ++t) {
            if (std::find(plan.masked_indices.begin(), plan.masked_indices.end(), t) ==
                plan.masked_indices.end()) {
                context_poke.at(t, 0) += 1.0;
                break;
            }
        }
        CHECK(fix.recon(context_poke, plan).data != base.data);
    }
}

TEST_CASE("reconstruct_masked returns nothing for an empty plan") {
    Fixture fix(8);
    Tape tape;
    Bound b = bind_params(tape, fix.params, false);
    Rng rng(9);
    const Tensor frames = random_matrix(rng, 5, 5);
    const MaskPlan plan = make_mask_plan(5, 0.0, 1);
    CHECK(!reconstruct_masked(tape, b, fix.cfg, frames, plan, tape.constant(fix.cond_f),
                              tape.constant(fix.cond_g))
               .has_value());

    MaskPlan bad;
    bad.masked_indices = {9};
    CHECK_THROWS_AS(reconstruct_masked(tape, b, fix.cfg, frames, bad, tape.constant(fix.cond_f),
                                       tape.constant(fix.cond_g)),
                    ContractError);
}

TEST_CASE("gradient check through both temporal heads") {
    Rng rng(555);
    double worst = 0.0;
    for (int rep = 0; rep < 6; ++rep) {
        Fixture fix(2000 + static_cast<std::uint64_t>(rep));
        const std::size_t T = 4;
        Tensor frames = random_matrix(rng, T, 5);
        const MaskPlan plan = make_mask_plan(T, 0.3, 77 + static_cast<std::uint64_t>(rep));
        const Tensor probe = random_matrix(rng, T, 5);

        MultiGraphBuilder future_build = [&](Tape& t, const std::vector<Var>& vs) {
            Bound b = bind_params(t, fix.params, false);
            b.vars["ta.l0.self.wq"] = vs[2];
            b.vars["lift_v.w"] = vs[3];
            Var out = predict_future(t, b, fix.cfg, frames, vs[0], vs[1]);
            return recon_mse(t, out, probe);
        };
        worst = std::max(worst, grad_check(future_build, {fix.cond_f, fix.cond_g,
                                                          fix.params.at("ta.l0.self.wq"),
                                                          fix.params.at("lift_v.w")}));

        MultiGraphBuilder recon_build = [&](Tape& t, const std::vector<Var>& vs) {
            Bound b = bind_params(t, fix.params, false);
            b.vars["ta.mask_token"] = vs[2];
            b.vars["ta.l0.cross.wv"] = vs[3];
            auto out = reconstruct_masked(t, b, fix.cfg, frames, plan, vs[0], vs[1]);
            REQUIRE(out.has_value());
            return sum_all(mul(*out, *out));
        };
        worst = std::max(worst, grad_check(recon_build, {fix.cond_f, fix.cond_g,
                                                         fix.params.at("ta.mask_token"),
                                                         fix.params.at("ta.l0.cross.wv")}));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("sinusoidal positions look right") {
    const Tensor pe = sinusoidal_positions(4, 6);
    CHECK(pe.at(0, 0) == 0.0);
    CHECK(pe.at(0, 1) == 1.0);
    CHECK(pe.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
    CHECK(pe.at(2, 1) == doctest::Approx(std::cos(2.0)).epsilon(1e-12));
}
