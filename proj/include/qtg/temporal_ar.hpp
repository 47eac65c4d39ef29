#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "qtg/model.hpp"

namespace qtg {

/// Which frame positions of a clip are hidden for reconstruction.
struct MaskPlan {
    std::vector<std::size_t> masked_indices;  // sorted, unique, < T
    double mask_ratio = 0.0;
    std::uint64_t seed = 0;

    bool empty() const { return masked_indices.empty(); }
};

/// round(ratio * T) uniformly random distinct indices, capped at T-1 masked
/// positions so at least one frame survives whenever T > 1.
MaskPlan make_mask_plan(std::size_t t_frames, double ratio, std::uint64_t seed);

/// Fixed sinusoidal position table, rows 0..count-1.
Tensor sinusoidal_positions(std::size_t count, std::size_t d_model);

/// Next-frame prediction under a strict causal mask. The prediction at
/// position i sees frames 0..i-1 through a right-shifted input stream;
/// position 0 sees only the conditioning embeddings. Output is [T, D].
Var predict_future(Tape& tape, const Bound& bound, const ModelConfig& cfg, const Tensor& frames,
                   Var cond_f, Var cond_g, double dropout_rate = 0.0, Rng* rng = nullptr);

/// Bidirectional reconstruction of masked frames. Masked positions are
/// replaced by the learned mask token before encoding, so their true values
/// cannot reach the output. Returns rows for the masked indices only, or
/// nothing when the plan is empty.
std::optional<Var> reconstruct_masked(Tape& tape, const Bound& bound, const ModelConfig& cfg,
                                      const Tensor& frames, const MaskPlan& plan, Var cond_f,
                                      Var cond_g, double dropout_rate = 0.0, Rng* rng = nullptr);

}  // namespace qtg
