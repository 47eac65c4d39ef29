#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qtg/data_synth.hpp"
#include "qtg/rng.hpp"
#include "qtg/tensor.hpp"

namespace qtg {

struct ModelConfig {
    int feature_dim = 32;     // width of frames, questions, candidates and scores
    int type_embed_dim = 32;
    int n_types = 6;
    int d_model = 64;
    int n_heads = 4;
    int d_ff = 256;
    int n_layers = 1;
    double dropout = 0.2;     // fusion decoder
    double ta_dropout = 0.1;  // temporal heads
    int pe_max_len = 5000;
    bool qtg_attention = true;
    bool temporal_ar = true;

    void validate() const;
};

/// Named trainable arrays. Iteration order is the map order, which keeps
/// checkpoints and optimizer sweeps deterministic.
struct ParamStore {
    std::map<std::string, Tensor> params;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return params.count(name) != 0; }
};

/// Fresh parameters for the configured toggles. Every array draws from its own
/// substream of `seed`, so arrays shared between ablation arms start equal.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Per-tape binding of a ParamStore (one leaf per array).
struct Bound {
    std::map<std::string, Var> vars;
    Var at(const std::string& name) const;
};
Bound bind_params(Tape& tape, const ParamStore& store, bool requires_grad = true);

// ----- shared transformer machinery -----

struct AttnRefs {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerRefs {
    AttnRefs self_attn, cross_attn;
    Var ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    Var ff_w1, ff_b1, ff_w2, ff_b2;
};

LayerRefs layer_refs(const Bound& bound, const std::string& prefix);

Var multihead_attention(Tape& tape, Var queries_in, Var keys_values_in, const AttnRefs& p,
                        int n_heads, const Tensor* additive_mask, double dropout_rate, Rng* rng);

/// Post-norm decoder layer: masked self-attention, cross-attention over
/// `memory`, position-wise feed-forward, each with residual + layer norm.
Var decoder_layer(Tape& tape, Var x, Var memory, const LayerRefs& refs, int n_heads,
                  const Tensor* self_mask, double dropout_rate, Rng* rng);

// ----- answering-path operations -----

/// Temporal average pooling of frame and text token sequences.
std::pair<Tensor, Tensor> pool_features(const Tensor& frames, const Tensor& text);

/// Column lookup of the trainable type-embedding table, as table * one-hot.
Var embed_qtype(Tape& tape, Var table, int q_idx);

/// Fuses pooled features in the decoder. The target stream is the lifted
/// pooled visual feature; the cross-attention memory holds the type token
/// (scaled by w_q before lifting) and the lifted pooled text feature. Without
/// a type token the memory is the text token alone.
Var fuse_decoder(Tape& tape, const Bound& bound, const ModelConfig& cfg, Var f_bar, Var g_bar,
                 std::optional<Var> e_q, double w_q, double dropout_rate = 0.0, Rng* rng = nullptr);

Var project(Tape& tape, const Bound& bound, Var fused);

/// Dot-product scores against the candidate rows.
Var score_answers(Tape& tape, Var f_hat, const Tensor& candidates);

/// Argmax with ties broken toward the lowest index.
int predicted_index(const Tensor& scores_row);

Tensor candidates_tensor(const TypedQuestion& q);

}  // namespace qtg
