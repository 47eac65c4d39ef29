#include "qtg/model.hpp"

#include <cmath>

namespace qtg {

namespace {

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    Tensor t = Tensor::zeros({fan_in, fan_out});
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

Var lift(Tape& tape, const Bound& b, Var x, const std::string& name) {
    return add_rowvec(matmul(x, b.at(name + ".w")), b.at(name + ".b"));
}

Var maybe_dropout(Tape& tape, Var x, double rate, Rng* rng) {
    if (rate <= 0.0 || rng == nullptr) return x;
    const Tensor& v = x.val();
    Tensor mask = Tensor::zeros(v.shape);
    const double keep = 1.0 - rate;
    for (double& m : mask.data) m = (rng->uniform() < keep) ? 1.0 / keep : 0.0;
    return mul(x, tape.constant(std::move(mask)));
}

}  // namespace

void ModelConfig::validate() const {
    if (feature_dim < 1 || type_embed_dim < 1 || n_types < 1) {
        throw ContractError("model: widths and type count must be positive");
    }
    if (d_model < 1 || n_heads < 1 || d_ff < 1 || n_layers < 1) {
        throw ContractError("model: decoder dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw ContractError("model: d_model must be divisible by the head count");
    }
    if (dropout < 0.0 || dropout >= 1.0 || ta_dropout < 0.0 || ta_dropout >= 1.0) {
        throw ContractError("model: dropout must lie in [0, 1)");
    }
}

Tensor& ParamStore::at(const std::string& name) {
    const auto it = params.find(name);
    if (it == params.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    const auto it = params.find(name);
    if (it == params.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

namespace {

void init_layer(ParamStore& store, const ModelConfig& cfg, const std::string& prefix,
                std::uint64_t seed) {
    const auto dm = static_cast<std::size_t>(cfg.d_model);
    const auto dff = static_cast<std::size_t>(cfg.d_ff);
    auto mat = [&](const std::string& name, std::size_t r, std::size_t c) {
        Rng rng = substream(seed, "init." + prefix + "." + name);
        store.params[prefix + "." + name] = xavier_uniform(r, c, rng);
    };
    auto zeros = [&](const std::string& name, std::size_t c) {
        store.params[prefix + "." + name] = Tensor::zeros({1, c});
    };
    auto ones = [&](const std::string& name, std::size_t c) {
        store.params[prefix + "." + name] = Tensor::full({1, c}, 1.0);
    };
    for (const char* blk : {"self", "cross"}) {
        const std::string a = std::string(blk);
        mat(a + ".wq", dm, dm);
        zeros(a + ".bq", dm);
        mat(a + ".wk", dm, dm);
        zeros(a + ".bk", dm);
        mat(a + ".wv", dm, dm);
        zeros(a + ".bv", dm);
        mat(a + ".wo", dm, dm);
        zeros(a + ".bo", dm);
    }
    ones("ln1.g", dm);
    zeros("ln1.b", dm);
    ones("ln2.g", dm);
    zeros("ln2.b", dm);
    ones("ln3.g", dm);
    zeros("ln3.b", dm);
    mat("ff.w1", dm, dff);
    zeros("ff.b1", dff);
    mat("ff.w2", dff, dm);
    zeros("ff.b2", dm);
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParamStore store;
    const auto d = static_cast<std::size_t>(cfg.feature_dim);
    const auto de = static_cast<std::size_t>(cfg.type_embed_dim);
    const auto dm = static_cast<std::size_t>(cfg.d_model);
    const auto n = static_cast<std::size_t>(cfg.n_types);

    auto mat = [&](const std::string& name, std::size_t r, std::size_t c) {
        Rng rng = substream(seed, "init." + name);
        store.params[name] = xavier_uniform(r, c, rng);
    };

    mat("lift_v.w", d, dm);
    store.params["lift_v.b"] = Tensor::zeros({1, dm});
    mat("lift_t.w", d, dm);
    store.params["lift_t.b"] = Tensor::zeros({1, dm});
    for (int l = 0; l < cfg.n_layers; ++l) {
        init_layer(store, cfg, "fuse.l" + std::to_string(l), seed);
    }
    mat("proj.w", dm, d);
    store.params["proj.b"] = Tensor::zeros({1, d});

    if (cfg.qtg_attention) {
        Rng rng = substream(seed, "init.qtype.table");
        Tensor table = Tensor::zeros({de, n});
        const double sigma = 1.0 / std::sqrt(static_cast<double>(de));
        for (double& v : table.data) v = rng.normal(0.0, sigma);
        store.params["qtype.table"] = std::move(table);
        mat("lift_q.w", de, dm);
        store.params["lift_q.b"] = Tensor::zeros({1, dm});
    }

    if (cfg.temporal_ar) {
        for (int l = 0; l < cfg.n_layers; ++l) {
            init_layer(store, cfg, "ta.l" + std::to_string(l), seed);
        }
        mat("ta.out.w", dm, d);
        store.params["ta.out.b"] = Tensor::zeros({1, d});
        Rng rng = substream(seed, "init.ta.mask_token");
        Tensor tok = Tensor::zeros({1, dm});
        for (double& v : tok.data) v = rng.normal(0.0, 0.02);
        store.params["ta.mask_token"] = std::move(tok);
    }
    return store;
}

Var Bound::at(const std::string& name) const {
    const auto it = vars.find(name);
    if (it == vars.end()) throw ContractError("parameter '" + name + "' is not bound");
    return it->second;
}

Bound bind_params(Tape& tape, const ParamStore& store, bool requires_grad) {
    Bound bound;
    for (const auto& [name, tensor] : store.params) {
        bound.vars[name] = tape.leaf(tensor, requires_grad);
    }
    return bound;
}

LayerRefs layer_refs(const Bound& bound, const std::string& prefix) {
    auto attn = [&](const std::string& blk) {
        return AttnRefs{bound.at(prefix + "." + blk + ".wq"), bound.at(prefix + "." + blk + ".bq"),
                        bound.at(prefix + "." + blk + ".wk"), bound.at(prefix + "." + blk + ".bk"),
                        bound.at(prefix + "." + blk + ".wv"), bound.at(prefix + "." + blk + ".bv"),
                        bound.at(prefix + "." + blk + ".wo"), bound.at(prefix + "." + blk + ".bo")};
    };
    LayerRefs refs;
    refs.self_attn = attn("self");
    refs.cross_attn = attn("cross");
    refs.ln1_g = bound.at(prefix + ".ln1.g");
    refs.ln1_b = bound.at(prefix + ".ln1.b");
    refs.ln2_g = bound.at(prefix + ".ln2.g");
    refs.ln2_b = bound.at(prefix + ".ln2.b");
    refs.ln3_g = bound.at(prefix + ".ln3.g");
    refs.ln3_b = bound.at(prefix + ".ln3.b");
    refs.ff_w1 = bound.at(prefix + ".ff.w1");
    refs.ff_b1 = bound.at(prefix + ".ff.b1");
    refs.ff_w2 = bound.at(prefix + ".ff.w2");
    refs.ff_b2 = bound.at(prefix + ".ff.b2");
    return refs;
}

Var multihead_attention(Tape& tape, Var queries_in, Var keys_values_in, const AttnRefs& p,
                        int n_heads, const Tensor* additive_mask, double dropout_rate, Rng* rng) {
    const std::size_t dm = queries_in.val().cols();
    if (dm % static_cast<std::size_t>(n_heads) != 0) {
        throw ContractError("attention: width must divide by the head count");
    }
    const std::size_t hd = dm / static_cast<std::size_t>(n_heads);
    Var q = add_rowvec(matmul(queries_in, p.wq), p.bq);
    Var k = add_rowvec(matmul(keys_values_in, p.wk), p.bk);
    Var v = add_rowvec(matmul(keys_values_in, p.wv), p.bv);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        const std::size_t c0 = static_cast<std::size_t>(h) * hd;
        Var qh = slice_cols(q, c0, hd);
        Var kh = slice_cols(k, c0, hd);
        Var vh = slice_cols(v, c0, hd);
        Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (additive_mask != nullptr) {
            scores = add(scores, tape.constant(*additive_mask));
        }
        Var probs = softmax(scores);
        heads.push_back(matmul(probs, vh));
    }
    Var merged = (n_heads == 1) ? heads[0] : concat_cols(heads);
    Var out = add_rowvec(matmul(merged, p.wo), p.bo);
    return maybe_dropout(tape, out, dropout_rate, rng);
}

Var decoder_layer(Tape& tape, Var x, Var memory, const LayerRefs& refs, int n_heads,
                  const Tensor* self_mask, double dropout_rate, Rng* rng) {
    Var self_out =
        multihead_attention(tape, x, x, refs.self_attn, n_heads, self_mask, dropout_rate, rng);
    x = layer_norm(add(x, self_out), refs.ln1_g, refs.ln1_b);
    Var cross_out =
        multihead_attention(tape, x, memory, refs.cross_attn, n_heads, nullptr, dropout_rate, rng);
    x = layer_norm(add(x, cross_out), refs.ln2_g, refs.ln2_b);
    Var hidden = gelu(add_rowvec(matmul(x, refs.ff_w1), refs.ff_b1));
    hidden = maybe_dropout(tape, hidden, dropout_rate, rng);
    Var ff_out = add_rowvec(matmul(hidden, refs.ff_w2), refs.ff_b2);
    x = layer_norm(add(x, ff_out), refs.ln3_g, refs.ln3_b);
    return x;
}

std::pair<Tensor, Tensor> pool_features(const Tensor& frames, const Tensor& text) {
    if (!frames.is_matrix() || !text.is_matrix()) {
        throw ContractError("pool_features: inputs must be 2-D sequences");
    }
    auto mean_rows = [](const Tensor& m) {
        Tensor out = Tensor::zeros({1, m.cols()});
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) out.data[j] += m.at(i, j);
        const double inv = 1.0 / static_cast<double>(m.rows());
        for (double& v : out.data) v *= inv;
        return out;
    };
    return {mean_rows(frames), mean_rows(text)};
}

Var embed_qtype(Tape& tape, Var table, int q_idx) {
    const Tensor& w = table.val();
    const std::size_t n = w.cols();
    if (q_idx < 0 || static_cast<std::size_t>(q_idx) >= n) {
        throw ContractError("embed_qtype: type index " + std::to_string(q_idx) +
                            " out of range for " + std::to_string(n) + " types");
    }
    Tensor one_hot = Tensor::zeros({n, 1});
    one_hot.data[static_cast<std::size_t>(q_idx)] = 1.0;
    return transpose(matmul(table, tape.constant(std::move(one_hot))));
}

Var fuse_decoder(Tape& tape, const Bound& bound, const ModelConfig& cfg, Var f_bar, Var g_bar,
                 std::optional<Var> e_q, double w_q, double dropout_rate, Rng* rng) {
    if (!(w_q >= 0.0 && w_q <= 1.0)) {
        throw ContractError("fuse_decoder: w_q must lie in [0, 1]");
    }
    if (f_bar.val().cols() != static_cast<std::size_t>(cfg.feature_dim) ||
        g_bar.val().cols() != static_cast<std::size_t>(cfg.feature_dim)) {
        throw ContractError("fuse_decoder: pooled feature width disagrees with the config");
    }
    Var target = lift(tape, bound, f_bar, "lift_v");
    Var g_tok = lift(tape, bound, g_bar, "lift_t");
    Var memory = g_tok;
    if (e_q.has_value()) {
        if (e_q->val().cols() != static_cast<std::size_t>(cfg.type_embed_dim)) {
            throw ContractError("fuse_decoder: type embedding width disagrees with the config");
        }
        Var e_tok = lift(tape, bound, scale(*e_q, w_q), "lift_q");
        memory = concat_rows({e_tok, g_tok});
    }
    Var x = target;
    for (int l = 0; l < cfg.n_layers; ++l) {
        x = decoder_layer(tape, x, memory, layer_refs(bound, "fuse.l" + std::to_string(l)),
                          cfg.n_heads, nullptr, dropout_rate, rng);
    }
    return x;
}

Var project(Tape& tape, const Bound& bound, Var fused) {
    (void)tape;
    return add_rowvec(matmul(fused, bound.at("proj.w")), bound.at("proj.b"));
}

Var score_answers(Tape& tape, Var f_hat, const Tensor& candidates) {
    if (!candidates.is_matrix() || candidates.rows() < 2) {
        throw ContractError("score_answers: need at least two candidates");
    }
    if (candidates.cols() != f_hat.val().cols()) {
        throw ContractError("score_answers: candidate width disagrees with the projection");
    }
    const std::size_t c = candidates.rows(), d = candidates.cols();
    Tensor cand_t = Tensor::zeros({d, c});
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < d; ++j) cand_t.data[j * c + i] = candidates.data[i * d + j];
    return matmul(f_hat, tape.constant(std::move(cand_t)));
}

int predicted_index(const Tensor& scores_row) {
    int best = 0;
    double best_score = scores_row.data[0];
    for (std::size_t i = 1; i < scores_row.size(); ++i) {
        if (scores_row.data[i] > best_score) {
            best_score = scores_row.data[i];
            best = static_cast<int>(i);
        }
    }
    return best;
}

Tensor candidates_tensor(const TypedQuestion& q) {
    const std::size_t c = q.candidates.size();
    const std::size_t d = q.candidates.empty() ? 0 : q.candidates[0].size();
    Tensor out = Tensor::zeros({c, d});
    for (std::size_t i = 0; i < c; ++i) {
        if (q.candidates[i].size() != d) throw DataError("candidate widths differ");
        std::copy(q.candidates[i].begin(), q.candidates[i].end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return out;
}

}  // namespace qtg
