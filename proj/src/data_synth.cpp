#include "qtg/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace qtg {

using nlohmann::json;

const char* const kSemanticTypeNames[kSemanticTypeCount] = {
    "basic", "forecasting", "reverse", "counterfactual", "introspection", "attribution"};

namespace {

// Construction amplitudes. Signal sizes are chosen so that every family is
// decodable from pooled features through its own readout, while no single
// shared readout solves them all.
constexpr double kBasicAmp = 1.0;
constexpr double kMotifAmp = 1.0;
constexpr double kReverseFirstAmp = 1.0;
constexpr double kReverseRampBase = 1.3;
constexpr double kReverseRampStep = 0.12;
constexpr double kReverseEchoAmp = 1.0;
constexpr double kReverseEchoDecay = 0.85;
constexpr double kCounterMarkedFrac = 0.45;
constexpr double kCounterMajorityFrac = 0.6;
constexpr double kMarkerAmp = 1.0;
constexpr double kIntroBackgroundAmp = 0.7;
constexpr double kIntroInsertAmp = 2.0;
constexpr double kSpikeAmp = 1.0;
constexpr double kAttribImprintAmp = 2.5;

void add_block(Tensor& frames, std::size_t t, const std::vector<double>& vec, double amp) {
    double* row = frames.data.data() + t * frames.cols();
    for (std::size_t j = 0; j < vec.size(); ++j) row[j] += amp * vec[j];
}

std::vector<double> unit_content_vector(Rng& rng, const ChannelLayout& lay, std::size_t d) {
    std::vector<double> v(d, 0.0);
    double norm = 0.0;
    for (std::size_t j = 0; j < lay.content_dim; ++j) {
        v[j] = rng.normal();
        norm += v[j] * v[j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < lay.content_dim; ++j) v[j] /= norm;
    return v;
}

std::vector<double> unit_block_vector(Rng& rng, std::size_t first, std::size_t count,
                                      std::size_t d) {
    std::vector<double> v(d, 0.0);
    double norm = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
        v[first + j] = rng.normal();
        norm += v[first + j] * v[first + j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < count; ++j) v[first + j] /= norm;
    return v;
}

int decoy_token(const GenConfig& cfg) {
    return cfg.motif_period;  // first generic token after the motif, reserved
}

// Random generic token, excluding the counterfactual decoy and extras.
int draw_pool_token(Rng& rng, const GenConfig& cfg, const Vocab& vocab,
                    std::initializer_list<int> exclude = {}) {
    const int pool = vocab.generic_pool_size(cfg.vocab_size);
    for (;;) {
        const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(pool)));
        if (k == decoy_token(cfg)) continue;
        bool bad = false;
        for (int e : exclude) bad = bad || (k == e);
        if (!bad) return k;
    }
}

std::vector<std::vector<double>> candidate_vectors(const Vocab& vocab,
                                                   const std::vector<int>& token_ids) {
    std::vector<std::vector<double>> out;
    out.reserve(token_ids.size());
    for (int k : token_ids) out.push_back(vocab.tokens[static_cast<std::size_t>(k)]);
    return out;
}

// Shuffle candidate tokens and return the shuffled list plus the answer slot.
std::pair<std::vector<int>, int> place_answer(Rng& rng, std::vector<int> tokens, int answer_tok) {
    std::vector<std::size_t> order(tokens.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<int> shuffled(tokens.size());
    int answer_idx = -1;
    for (std::size_t i = 0; i < order.size(); ++i) {
        shuffled[i] = tokens[order[i]];
        if (shuffled[i] == answer_tok && answer_idx < 0) answer_idx = static_cast<int>(i);
    }
    return {shuffled, answer_idx};
}

// Pick `n` distinct distractor tokens, preferring `preferred` (tokens that
// occur in the clip) and falling back to the generic pool.
std::vector<int> pick_distractors(Rng& rng, const GenConfig& cfg, const Vocab& vocab,
                                  const std::set<int>& preferred, int answer_tok, std::size_t n) {
    std::vector<int> out;
    std::vector<int> pref(preferred.begin(), preferred.end());
    std::vector<std::size_t> order(pref.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size() && out.size() < n; ++i) {
        const int k = pref[order[i]];
        if (k != answer_tok) out.push_back(k);
    }
    while (out.size() < n) {
        const int k = draw_pool_token(rng, cfg, vocab, {answer_tok});
        if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
    return out;
}

}  // namespace

ChannelLayout ChannelLayout::for_dim(std::size_t d) {
    if (d < 8) throw ContractError("feature_dim must be at least 8");
    ChannelLayout lay{};
    lay.content_dim = d / 2;
    lay.marker_dim = lay.content_dim;
    lay.spike_dim = lay.content_dim + 1;
    const std::size_t aux = d - lay.content_dim - 2;
    lay.attrib_first = lay.content_dim + 2;
    lay.attrib_count = aux / 2;
    lay.reverse_first = lay.attrib_first + lay.attrib_count;
    lay.reverse_count = aux - lay.attrib_count;
    return lay;
}

void GenConfig::validate() const {
    if (feature_dim < 8) throw ContractError("feature_dim must be at least 8");
    if (vocab_size < 10) throw ContractError("vocab_size must be at least 10");
    if (motif_period < 4) throw ContractError("motif_period must be at least 4");
    if (motif_period + 1 >= vocab_size - 4) {
        throw ContractError("vocab too small for the motif and the reserved tokens");
    }
    if (num_keyframes < 1 || frames_per_key < 1) {
        throw ContractError("keyframe geometry must be positive");
    }
    if (noise_sigma < 0.0) throw ContractError("noise_sigma must be non-negative");
    for (const auto* c : {&counts_train, &counts_val, &counts_test}) {
        if (static_cast<int>(c->size()) != kSemanticTypeCount) {
            throw ContractError("per-type counts must list all six families");
        }
        for (int v : *c) {
            if (v < 0) throw ContractError("per-type counts must be non-negative");
        }
    }
}

Vocab make_vocab(const GenConfig& cfg) {
    Vocab v;
    v.layout = ChannelLayout::for_dim(static_cast<std::size_t>(cfg.feature_dim));
    Rng rng = substream(cfg.seed, "data.vocab");
    const std::size_t d = static_cast<std::size_t>(cfg.feature_dim);
    for (int k = 0; k < cfg.vocab_size; ++k) {
        v.tokens.push_back(unit_content_vector(rng, v.layout, d));
    }
    for (int k = 0; k < cfg.vocab_size; ++k) {
        v.attrib_code.push_back(unit_block_vector(rng, v.layout.attrib_first,
                                                  v.layout.attrib_count, d));
    }
    for (int k = 0; k < cfg.vocab_size; ++k) {
        v.reverse_code.push_back(unit_block_vector(rng, v.layout.reverse_first,
                                                   v.layout.reverse_count, d));
    }
    return v;
}

FrameSample sample_frames(std::size_t total_frames, std::size_t num_keys, std::size_t window) {
    if (total_frames < 1 || num_keys < 1 || window < 1) {
        throw ContractError("sample_frames: all arguments must be positive");
    }
    FrameSample out;
    out.indices.reserve(num_keys * window);
    const auto total = static_cast<std::int64_t>(total_frames);
    const auto win = static_cast<std::int64_t>(window);
    for (std::size_t i = 0; i < num_keys; ++i) {
        const auto key = static_cast<std::int64_t>(
            ((2 * static_cast<std::int64_t>(i) + 1) * total) / (2 * static_cast<std::int64_t>(num_keys)));
        if (total < win) {
            // Shorter clip than one window: take everything, repeat the tail.
            out.padded = true;
            for (std::int64_t t = 0; t < win; ++t) {
                out.indices.push_back(static_cast<std::size_t>(std::min(t, total - 1)));
            }
            continue;
        }
        std::int64_t start = key - win / 2;
        start = std::max<std::int64_t>(0, std::min(start, total - win));
        for (std::int64_t t = start; t < start + win; ++t) {
            out.indices.push_back(static_cast<std::size_t>(t));
        }
    }
    return out;
}

Item generate_item(int semantic_type, std::uint64_t rng_seed, const GenConfig& cfg,
                   const Vocab& vocab) {
    if (semantic_type < 0 || semantic_type >= kSemanticTypeCount) {
        throw ContractError("generate_item: unknown question type " +
                            std::to_string(semantic_type));
    }
    cfg.validate();
    Rng rng(rng_seed);
    const std::size_t T = static_cast<std::size_t>(cfg.frames_total());
    const std::size_t D = static_cast<std::size_t>(cfg.feature_dim);
    const ChannelLayout& lay = vocab.layout;

    Tensor raw = Tensor::zeros({T, D});
    std::vector<int> cand_tokens;
    int answer_idx = -1;

    switch (semantic_type) {
        case 0: {  // basic: one token on every frame
            const int a = draw_pool_token(rng, cfg, vocab);
            for (std::size_t t = 0; t < T; ++t) add_block(raw, t, vocab.tokens[a], kBasicAmp);
            std::vector<int> cands{a};
            while (cands.size() < 4) {
                const int k = draw_pool_token(rng, cfg, vocab, {a});
                if (std::find(cands.begin(), cands.end(), k) == cands.end()) cands.push_back(k);
            }
            std::tie(cand_tokens, answer_idx) = place_answer(rng, cands, a);
            break;
        }
        case 1: {  // forecasting: periodic motif, answer is the next token
            const int p = cfg.motif_period;
            const int phase = static_cast<int>(rng.below(static_cast<std::uint64_t>(p)));
            for (std::size_t t = 0; t < T; ++t) {
                const int tok = (static_cast<int>(t) + phase) % p;
                add_block(raw, t, vocab.tokens[tok], kMotifAmp);
            }
            const int answer = (static_cast<int>(T) + phase) % p;
            std::vector<int> motif_rest;
            for (int k = 0; k < p; ++k)
                if (k != answer) motif_rest.push_back(k);
            std::vector<std::size_t> order(motif_rest.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            rng.shuffle(order);
            std::vector<int> cands{answer};
            for (std::size_t i = 0; i < 3; ++i) cands.push_back(motif_rest[order[i]]);
            std::tie(cand_tokens, answer_idx) = place_answer(rng, cands, answer);
            break;
        }
        case 2: {  // reverse: answer sits in frame 0, later evidence is louder
            const int a = draw_pool_token(rng, cfg, vocab);
            add_block(raw, 0, vocab.tokens[a], kReverseFirstAmp);
            const std::size_t half = T / 2;
            std::set<int> seen;
            for (std::size_t t = 1; t < half; ++t) {
                const int b = draw_pool_token(rng, cfg, vocab, {a});
                seen.insert(b);
                add_block(raw, t, vocab.tokens[b],
                          kReverseRampBase + kReverseRampStep * static_cast<double>(t - 1));
            }
            double echo = kReverseEchoAmp;
            for (std::size_t t = 0; t < half; ++t) {
                add_block(raw, t, vocab.reverse_code[a], echo);
                echo *= kReverseEchoDecay;
            }
            const double amp = 1.0 / std::sqrt(static_cast<double>(lay.content_dim));
            for (std::size_t t = half; t < T; ++t) {
                double* row = raw.data.data() + t * D;
                for (std::size_t j = 0; j < lay.content_dim; ++j) row[j] += rng.normal(0.0, amp);
            }
            std::vector<int> cands{a};
            for (int k : pick_distractors(rng, cfg, vocab, seen, a, 3)) cands.push_back(k);
            std::tie(cand_tokens, answer_idx) = place_answer(rng, cands, a);
            break;
        }
        case 3: {  // counterfactual: majority among unmarked; marked carry a decoy
            const int decoy = decoy_token(cfg);
            const int a = draw_pool_token(rng, cfg, vocab);
            const std::size_t marked_n =
                static_cast<std::size_t>(std::lround(kCounterMarkedFrac * static_cast<double>(T)));
            std::vector<std::size_t> marked = rng.sample_without_replacement(T, marked_n);
            std::vector<bool> is_marked(T, false);
            for (std::size_t m : marked) is_marked[m] = true;
            std::vector<std::size_t> unmarked;
            for (std::size_t t = 0; t < T; ++t)
                if (!is_marked[t]) unmarked.push_back(t);
            const std::size_t majority =
                static_cast<std::size_t>(std::ceil(kCounterMajorityFrac *
                                                   static_cast<double>(unmarked.size())));
            std::vector<std::size_t> perm(unmarked.size());
            for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
            rng.shuffle(perm);
            std::set<int> minors;
            for (std::size_t i = 0; i < unmarked.size(); ++i) {
                const std::size_t t = unmarked[perm[i]];
                if (i < majority) {
                    add_block(raw, t, vocab.tokens[a], 1.0);
                } else {
                    const int b = draw_pool_token(rng, cfg, vocab, {a});
                    minors.insert(b);
                    add_block(raw, t, vocab.tokens[b], 1.0);
                }
            }
            for (std::size_t m : marked) {
                add_block(raw, m, vocab.tokens[decoy], 1.0);
                raw.data[m * D + lay.marker_dim] += kMarkerAmp;
            }
            std::vector<int> cands{a, decoy};
            for (int k : pick_distractors(rng, cfg, vocab, minors, a, 2)) {
                if (k != decoy) cands.push_back(k);
            }
            while (cands.size() < 4) {
                const int k = draw_pool_token(rng, cfg, vocab, {a});
                if (std::find(cands.begin(), cands.end(), k) == cands.end()) cands.push_back(k);
            }
            cands.resize(4);
            std::tie(cand_tokens, answer_idx) = place_answer(rng, cands, a);
            break;
        }
        case 4: {  // introspection: did the precursor appear before the event?
            const int p_tok = vocab.precursor_token(cfg.vocab_size);
            const int e_tok = vocab.event_token(cfg.vocab_size);
            for (std::size_t t = 0; t < T; ++t) {
                add_block(raw, t, vocab.tokens[draw_pool_token(rng, cfg, vocab)],
                          kIntroBackgroundAmp);
            }
            const std::size_t t_e =
                T / 2 + rng.below(static_cast<std::uint64_t>(T - 1 - T / 2));
            add_block(raw, t_e, vocab.tokens[e_tok], kIntroInsertAmp);
            const double u = rng.uniform();
            bool yes = false;
            if (u < 1.0 / 3.0) {
                // precursor absent
            } else if (u < 1.0 / 3.0 + 0.5) {
                const std::size_t t_p = 1 + rng.below(static_cast<std::uint64_t>(t_e - 1));
                add_block(raw, t_p, vocab.tokens[p_tok], kIntroInsertAmp);
                yes = true;
            } else {
                const std::size_t t_p = t_e + 1 + rng.below(static_cast<std::uint64_t>(T - t_e - 1));
                add_block(raw, t_p, vocab.tokens[p_tok], kIntroInsertAmp);
            }
            cand_tokens = {vocab.yes_token(cfg.vocab_size), vocab.no_token(cfg.vocab_size)};
            answer_idx = yes ? 0 : 1;
            break;
        }
        case 5: {  // attribution: a spiked frame imprints its token's code
            std::vector<int> frame_tok(T);
            std::set<int> seen;
            for (std::size_t t = 0; t < T; ++t) {
                frame_tok[t] = draw_pool_token(rng, cfg, vocab);
                seen.insert(frame_tok[t]);
                add_block(raw, t, vocab.tokens[frame_tok[t]], 1.0);
            }
            const std::size_t s = rng.below(T);
            const int a = frame_tok[s];
            raw.data[s * D + lay.spike_dim] += kSpikeAmp;
            add_block(raw, s, vocab.attrib_code[a], kAttribImprintAmp);
            std::vector<int> cands{a};
            for (int k : pick_distractors(rng, cfg, vocab, seen, a, 3)) cands.push_back(k);
            std::tie(cand_tokens, answer_idx) = place_answer(rng, cands, a);
            break;
        }
        default:
            break;
    }

    // Keyframe sampling (identity when the raw clip already has keys*window
    // frames, which is how datasets are generated).
    const FrameSample fs = sample_frames(T, static_cast<std::size_t>(cfg.num_keyframes),
                                         static_cast<std::size_t>(cfg.frames_per_key));
    Tensor sampled = Tensor::zeros({fs.indices.size(), D});
    for (std::size_t i = 0; i < fs.indices.size(); ++i) {
        std::copy(raw.data.begin() + static_cast<std::ptrdiff_t>(fs.indices[i] * D),
                  raw.data.begin() + static_cast<std::ptrdiff_t>((fs.indices[i] + 1) * D),
                  sampled.data.begin() + static_cast<std::ptrdiff_t>(i * D));
    }

    Item item;
    item.question.id = "item";
    item.question.qtype = semantic_type;
    item.question.question_vec = unit_content_vector(rng, lay, D);
    item.question.candidates = candidate_vectors(vocab, cand_tokens);
    item.question.answer_idx = answer_idx;

    if (cfg.noise_sigma > 0.0) {
        for (double& v : sampled.data) v += rng.normal(0.0, cfg.noise_sigma);
    }
    item.clip.frames = std::move(sampled);
    return item;
}

int DatasetManifest::count_of(const std::string& split, int qtype) const {
    const auto it = counts.find(split);
    if (it == counts.end()) throw DataError("manifest has no split '" + split + "'");
    return it->second.at(static_cast<std::size_t>(qtype));
}

int DatasetManifest::split_total(const std::string& split) const {
    const auto it = counts.find(split);
    if (it == counts.end()) throw DataError("manifest has no split '" + split + "'");
    int total = 0;
    for (int c : it->second) total += c;
    return total;
}

Dataset generate_dataset(const GenConfig& cfg) {
    cfg.validate();
    const Vocab vocab = make_vocab(cfg);

    std::vector<int> present;
    for (int t = 0; t < kSemanticTypeCount; ++t) {
        if (cfg.counts_train[t] > 0 || cfg.counts_val[t] > 0 || cfg.counts_test[t] > 0) {
            present.push_back(t);
        }
    }
    if (present.empty()) throw ContractError("generate_dataset: all per-type counts are zero");

    Dataset ds;
    ds.manifest.format_version = 1;
    ds.manifest.n_types = static_cast<int>(present.size());
    for (int t : present) ds.manifest.type_names.push_back(kSemanticTypeNames[t]);
    ds.manifest.semantic_types = present;
    ds.manifest.feature_dim = cfg.feature_dim;
    ds.manifest.frames = cfg.frames_total();
    ds.manifest.seed = cfg.seed;
    ds.manifest.noise_sigma = cfg.noise_sigma;
    ds.manifest.motif_period = cfg.motif_period;
    ds.manifest.vocab_size = cfg.vocab_size;
    ds.manifest.num_keyframes = cfg.num_keyframes;
    ds.manifest.frames_per_key = cfg.frames_per_key;

    const std::map<std::string, const std::vector<int>*> split_counts{
        {"train", &cfg.counts_train}, {"val", &cfg.counts_val}, {"test", &cfg.counts_test}};

    for (const auto& [split, counts] : split_counts) {
        std::vector<int> dense_counts;
        std::vector<Item>& items = ds.splits[split];
        for (std::size_t dense = 0; dense < present.size(); ++dense) {
            const int sem = present[dense];
            const int n = (*counts)[static_cast<std::size_t>(sem)];
            dense_counts.push_back(n);
            for (int i = 0; i < n; ++i) {
                const std::uint64_t item_seed = substream_seed(
                    cfg.seed, "data." + split,
                    (static_cast<std::uint64_t>(sem) << 32) | static_cast<std::uint64_t>(i));
                Item item = generate_item(sem, item_seed, cfg, vocab);
                char id[64];
                std::snprintf(id, sizeof(id), "%s-%s-%06d", split.c_str(),
                              kSemanticTypeNames[sem], i);
                item.question.id = id;
                item.question.qtype = static_cast<int>(dense);
                items.push_back(std::move(item));
            }
        }
        ds.manifest.counts[split] = dense_counts;
    }
    return ds;
}

// ----- persistence -----

namespace {

void fmt_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

void fmt_vector(std::string& out, const std::vector<double>& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        fmt_double(out, v[i]);
    }
    out += ']';
}

std::vector<double> parse_vector(const json& j, const char* field, const std::string& where) {
    if (!j.is_array()) throw DataError(where + ": field '" + field + "' must be an array");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_number()) throw DataError(where + ": non-numeric entry in '" + field + "'");
        out.push_back(e.get<double>());
    }
    return out;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    json m;
    m["format_version"] = ds.manifest.format_version;
    m["n_types"] = ds.manifest.n_types;
    m["type_names"] = ds.manifest.type_names;
    m["semantic_types"] = ds.manifest.semantic_types;
    m["counts"] = ds.manifest.counts;
    m["feature_dim"] = ds.manifest.feature_dim;
    m["frames"] = ds.manifest.frames;
    m["seed"] = ds.manifest.seed;
    m["noise_sigma"] = ds.manifest.noise_sigma;
    m["motif_period"] = ds.manifest.motif_period;
    m["vocab_size"] = ds.manifest.vocab_size;
    m["num_keyframes"] = ds.manifest.num_keyframes;
    m["frames_per_key"] = ds.manifest.frames_per_key;
    m["window_padding_used"] = ds.manifest.window_padding_used;
    {
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
        out << m.dump(2) << "\n";
    }

    for (const auto& [split, items] : ds.splits) {
        std::ofstream out(dir / (split + ".jsonl"), std::ios::binary);
        if (!out) throw DataError("cannot write split file for '" + split + "'");
        std::string line;
        for (const Item& item : items) {
            line.clear();
            line += "{\"id\":\"";
            line += item.question.id;
            line += "\",\"qtype\":";
            line += std::to_string(item.question.qtype);
            line += ",\"frames\":[";
            const Tensor& f = item.clip.frames;
            for (std::size_t t = 0; t < f.rows(); ++t) {
                if (t) line += ',';
                line += '[';
                for (std::size_t j = 0; j < f.cols(); ++j) {
                    if (j) line += ',';
                    fmt_double(line, f.at(t, j));
                }
                line += ']';
            }
            line += "],\"question_vec\":";
            fmt_vector(line, item.question.question_vec);
            line += ",\"candidates\":[";
            for (std::size_t c = 0; c < item.question.candidates.size(); ++c) {
                if (c) line += ',';
                fmt_vector(line, item.question.candidates[c]);
            }
            line += "],\"answer_idx\":";
            line += std::to_string(item.question.answer_idx);
            line += "}\n";
            out << line;
        }
    }
}

DatasetManifest load_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    DatasetManifest out;
    try {
        out.format_version = m.at("format_version").get<int>();
        if (out.format_version != 1) {
            throw DataError(path.string() + ": unsupported format_version " +
                            std::to_string(out.format_version));
        }
        out.n_types = m.at("n_types").get<int>();
        out.type_names = m.at("type_names").get<std::vector<std::string>>();
        out.semantic_types = m.at("semantic_types").get<std::vector<int>>();
        out.counts = m.at("counts").get<std::map<std::string, std::vector<int>>>();
        out.feature_dim = m.at("feature_dim").get<int>();
        out.frames = m.at("frames").get<int>();
        out.seed = m.at("seed").get<std::uint64_t>();
        out.noise_sigma = m.at("noise_sigma").get<double>();
        out.motif_period = m.at("motif_period").get<int>();
        out.vocab_size = m.at("vocab_size").get<int>();
        out.num_keyframes = m.at("num_keyframes").get<int>();
        out.frames_per_key = m.at("frames_per_key").get<int>();
        out.window_padding_used = m.at("window_padding_used").get<bool>();
    } catch (const json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (static_cast<int>(out.type_names.size()) != out.n_types) {
        throw DataError(path.string() + ": type_names length disagrees with n_types");
    }
    for (const auto& [split, c] : out.counts) {
        if (static_cast<int>(c.size()) != out.n_types) {
            throw DataError(path.string() + ": counts for split '" + split +
                            "' disagree with n_types");
        }
    }
    return out;
}

std::vector<Item> load_split(const std::filesystem::path& dir, const std::string& split,
                             const DatasetManifest& manifest) {
    const auto path = dir / (split + ".jsonl");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());

    std::vector<Item> items;
    std::vector<int> tally(static_cast<std::size_t>(manifest.n_types), 0);
    std::string line;
    std::size_t line_no = 0;
    const auto T = static_cast<std::size_t>(manifest.frames);
    const auto D = static_cast<std::size_t>(manifest.feature_dim);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(where + ": malformed record: " + e.what());
        }
        Item item;
        try {
            item.question.id = j.at("id").get<std::string>();
            item.question.qtype = j.at("qtype").get<int>();
            item.question.answer_idx = j.at("answer_idx").get<int>();
            item.question.question_vec = parse_vector(j.at("question_vec"), "question_vec", where);
            for (const auto& c : j.at("candidates")) {
                item.question.candidates.push_back(parse_vector(c, "candidates", where));
            }
            const auto& fr = j.at("frames");
            if (!fr.is_array() || fr.size() != T) {
                throw DataError(where + ": expected " + std::to_string(T) + " frames");
            }
            Tensor frames = Tensor::zeros({T, D});
            std::size_t t = 0;
            for (const auto& row : fr) {
                const std::vector<double> v = parse_vector(row, "frames", where);
                if (v.size() != D) throw DataError(where + ": frame width disagrees with manifest");
                std::copy(v.begin(), v.end(),
                          frames.data.begin() + static_cast<std::ptrdiff_t>(t * D));
                ++t;
            }
            item.clip.frames = std::move(frames);
        } catch (const json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
        if (item.question.qtype < 0 || item.question.qtype >= manifest.n_types) {
            throw DataError(where + ": qtype out of range");
        }
        if (item.question.candidates.size() < 2) {
            throw DataError(where + ": need at least two candidates");
        }
        if (item.question.answer_idx < 0 ||
            item.question.answer_idx >= static_cast<int>(item.question.candidates.size())) {
            throw DataError(where + ": answer_idx out of range");
        }
        if (item.question.question_vec.size() != D) {
            throw DataError(where + ": question_vec width disagrees with manifest");
        }
        for (const auto& c : item.question.candidates) {
            if (c.size() != D) throw DataError(where + ": candidate width disagrees with manifest");
        }
        if (!item.clip.frames.all_finite()) throw DataError(where + ": non-finite frame value");
        ++tally[static_cast<std::size_t>(item.question.qtype)];
        items.push_back(std::move(item));
    }

    const auto it = manifest.counts.find(split);
    if (it == manifest.counts.end()) throw DataError("manifest has no counts for '" + split + "'");
    if (tally != it->second) {
        throw DataError(path.string() + ": per-type record counts disagree with the manifest");
    }
    return items;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    ds.manifest = load_manifest(dir);
    for (const auto& [split, _] : ds.manifest.counts) {
        ds.splits[split] = load_split(dir, split, ds.manifest);
    }
    return ds;
}

}  // namespace qtg
