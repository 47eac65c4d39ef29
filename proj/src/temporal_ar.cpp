#include "qtg/temporal_ar.hpp"

#include <cmath>

namespace qtg {

namespace {

// Large negative additive mask value; exp underflows to exactly zero after
// max subtraction, which is what makes the causality tests exact.
constexpr double kMaskedScore = -1e9;

void check_inputs(const Bound& bound, const ModelConfig& cfg, const Tensor& frames, Var cond_f,
                  Var cond_g) {
    if (!frames.is_matrix() || frames.cols() != static_cast<std::size_t>(cfg.feature_dim)) {
        throw ContractError("temporal head: frame width disagrees with the config");
    }
    const auto dm = static_cast<std::size_t>(cfg.d_model);
    if (cond_f.val().cols() != dm || cond_g.val().cols() != dm) {
        throw ContractError("temporal head: conditioning embeddings must be d_model wide");
    }
    if (frames.rows() > static_cast<std::size_t>(cfg.pe_max_len)) {
        throw ContractError("temporal head: clip exceeds the position-encoding length");
    }
    bound.at("ta.out.w");  // raises if the temporal parameters are absent
}

Var lift_frames(Tape& tape, const Bound& bound, const Tensor& frames) {
    return add_rowvec(matmul(tape.constant(frames), bound.at("lift_v.w")), bound.at("lift_v.b"));
}

Var run_decoder(Tape& tape, const Bound& bound, const ModelConfig& cfg, Var x, Var cond_f,
                Var cond_g, const Tensor* self_mask, double dropout_rate, Rng* rng) {
    Var memory = concat_rows({cond_f, cond_g});
    for (int l = 0; l < cfg.n_layers; ++l) {
        x = decoder_layer(tape, x, memory, layer_refs(bound, "ta.l" + std::to_string(l)),
                          cfg.n_heads, self_mask, dropout_rate, rng);
    }
    return add_rowvec(matmul(x, bound.at("ta.out.w")), bound.at("ta.out.b"));
}

}  // namespace

MaskPlan make_mask_plan(std::size_t t_frames, double ratio, std::uint64_t seed) {
    if (t_frames < 1) throw ContractError("make_mask_plan: need at least one frame");
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw ContractError("make_mask_plan: ratio must lie in [0, 1]");
    }
    std::size_t k = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(t_frames)));
    if (t_frames > 1) k = std::min(k, t_frames - 1);
    MaskPlan plan;
    plan.mask_ratio = ratio;
    plan.seed = seed;
    if (k > 0) {
        Rng rng(seed);
        plan.masked_indices = rng.sample_without_replacement(t_frames, k);
    }
    return plan;
}

Tensor sinusoidal_positions(std::size_t count, std::size_t d_model) {
    Tensor pe = Tensor::zeros({count, d_model});
    for (std::size_t pos = 0; pos < count; ++pos) {
        for (std::size_t i = 0; i < d_model; i += 2) {
            const double rate =
                std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d_model));
            const double angle = static_cast<double>(pos) / rate;
            pe.at(pos, i) = std::sin(angle);
            if (i + 1 < d_model) pe.at(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

Var predict_future(Tape& tape, const Bound& bound, const ModelConfig& cfg, const Tensor& frames,
                   Var cond_f, Var cond_g, double dropout_rate, Rng* rng) {
    check_inputs(bound, cfg, frames, cond_f, cond_g);
    const std::size_t t_count = frames.rows();
    if (t_count < 2) throw ContractError("predict_future: need at least two frames");
    const auto dm = static_cast<std::size_t>(cfg.d_model);

    // Right-shifted input: position 0 carries a zero start row, position i
    // carries frame i-1. With an inclusive causal mask the prediction at i
    // therefore depends on frames 0..i-1 only.
    Var lifted = lift_frames(tape, bound, frames);
    Var inputs = concat_rows(
        {tape.constant(Tensor::zeros({1, dm})), slice_rows(lifted, 0, t_count - 1)});
    Var x = add(inputs, tape.constant(sinusoidal_positions(t_count, dm)));

    Tensor mask = Tensor::zeros({t_count, t_count});
    for (std::size_t i = 0; i < t_count; ++i)
        for (std::size_t j = i + 1; j < t_count; ++j) mask.at(i, j) = kMaskedScore;

    return run_decoder(tape, bound, cfg, x, cond_f, cond_g, &mask, dropout_rate, rng);
}

std::optional<Var> reconstruct_masked(Tape& tape, const Bound& bound, const ModelConfig& cfg,
                                      const Tensor& frames, const MaskPlan& plan, Var cond_f,
                                      Var cond_g, double dropout_rate, Rng* rng) {
    check_inputs(bound, cfg, frames, cond_f, cond_g);
    const std::size_t t_count = frames.rows();
    for (std::size_t i = 0; i < plan.masked_indices.size(); ++i) {
        if (plan.masked_indices[i] >= t_count) {
            throw ContractError("reconstruct_masked: plan index out of range");
        }
        if (i > 0 && plan.masked_indices[i] <= plan.masked_indices[i - 1]) {
            throw ContractError("reconstruct_masked: plan indices must be sorted and unique");
        }
    }
    if (plan.empty()) return std::nullopt;

    std::vector<bool> is_masked(t_count, false);
    for (std::size_t m : plan.masked_indices) is_masked[m] = true;

    Var lifted = lift_frames(tape, bound, frames);
    Var mask_token = bound.at("ta.mask_token");
    std::vector<Var> stream_rows;
    stream_rows.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
        stream_rows.push_back(is_masked[t] ? mask_token : slice_rows(lifted, t, 1));
    }
    Var x = add(concat_rows(stream_rows),
                tape.constant(sinusoidal_positions(t_count, static_cast<std::size_t>(cfg.d_model))));
    Var decoded = run_decoder(tape, bound, cfg, x, cond_f, cond_g, nullptr, dropout_rate, rng);
    return gather_rows(decoded, plan.masked_indices);
}

}  // namespace qtg
