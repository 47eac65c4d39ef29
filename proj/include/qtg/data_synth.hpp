#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qtg/rng.hpp"
#include "qtg/tensor.hpp"

namespace qtg {

/// A T x D sequence of frame feature vectors standing in for extracted video
/// features.
struct FeatureClip {
    Tensor frames;  // [T, D]

    std::size_t frame_count() const { return frames.rows(); }
    std::size_t feature_dim() const { return frames.cols(); }
};

struct TypedQuestion {
    std::string id;
    int qtype = 0;  // dense index into the manifest type list
    std::vector<double> question_vec;
    std::vector<std::vector<double>> candidates;
    int answer_idx = 0;
};

struct Item {
    FeatureClip clip;
    TypedQuestion question;
};

struct DatasetManifest {
    int format_version = 1;
    int n_types = 0;
    std::vector<std::string> type_names;
    std::vector<int> semantic_types;  // generator family of each dense type
    std::map<std::string, std::vector<int>> counts;  // split -> per-type counts
    int feature_dim = 0;
    int frames = 0;
    std::uint64_t seed = 0;
    double noise_sigma = 0.0;
    int motif_period = 0;
    int vocab_size = 0;
    int num_keyframes = 0;
    int frames_per_key = 0;
    bool window_padding_used = false;

    int count_of(const std::string& split, int qtype) const;
    int split_total(const std::string& split) const;
};

struct Dataset {
    DatasetManifest manifest;
    std::map<std::string, std::vector<Item>> splits;
};

/// Generator configuration. The six families mirror the usual typed video-QA
/// categories: basic recognition, forecasting, reverse reasoning,
/// counterfactual filtering, introspection ordering, and attribution.
struct GenConfig {
    std::uint64_t seed = 0;
    int feature_dim = 32;
    int vocab_size = 16;
    int num_keyframes = 4;
    int frames_per_key = 8;
    double noise_sigma = 0.1;
    int motif_period = 5;
    std::vector<int> counts_train{1000, 200, 200, 100, 100, 400};
    std::vector<int> counts_val{100, 20, 20, 10, 10, 40};
    std::vector<int> counts_test{250, 50, 50, 25, 25, 100};

    int frames_total() const { return num_keyframes * frames_per_key; }
    void validate() const;
};

inline constexpr int kSemanticTypeCount = 6;
extern const char* const kSemanticTypeNames[kSemanticTypeCount];

/// Channel layout inside the D-dimensional feature space. Token content sits
/// in the leading half; the rest carries the marker flag, the spike flag and
/// two association blocks written by the reverse/attribution families.
struct ChannelLayout {
    std::size_t content_dim;
    std::size_t marker_dim;
    std::size_t spike_dim;
    std::size_t attrib_first, attrib_count;
    std::size_t reverse_first, reverse_count;

    static ChannelLayout for_dim(std::size_t d);
};

/// Per-dataset token vocabulary: K unit vectors in the content subspace plus
/// per-token association codes for the attribution and reverse blocks.
struct Vocab {
    std::vector<std::vector<double>> tokens;       // [K][D], content block only
    std::vector<std::vector<double>> attrib_code;  // [K][D], attribution block only
    std::vector<std::vector<double>> reverse_code; // [K][D], reverse block only
    ChannelLayout layout{};

    int yes_token(int k) const { return k - 4; }
    int no_token(int k) const { return k - 3; }
    int precursor_token(int k) const { return k - 2; }
    int event_token(int k) const { return k - 1; }
    int generic_pool_size(int k) const { return k - 4; }
};

Vocab make_vocab(const GenConfig& cfg);

/// Uniform keyframe sampling: num_keys keyframes at floor((i+0.5)*total/keys),
/// each expanded to `window` consecutive indices, clamped into range by
/// shifting. Clips shorter than one window repeat their last index.
struct FrameSample {
    std::vector<std::size_t> indices;
    bool padded = false;
};
FrameSample sample_frames(std::size_t total_frames, std::size_t num_keys, std::size_t window);

/// Build one item of the given semantic type. Deterministic in
/// (semantic_type, rng_seed, cfg).
Item generate_item(int semantic_type, std::uint64_t rng_seed, const GenConfig& cfg,
                   const Vocab& vocab);

/// Full dataset with train/val/test splits and a dense type remap (types with
/// zero requested counts everywhere are dropped from the manifest).
Dataset generate_dataset(const GenConfig& cfg);

// ----- persistence: one JSON manifest + one JSON-Lines file per split -----

void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
DatasetManifest load_manifest(const std::filesystem::path& dir);
std::vector<Item> load_split(const std::filesystem::path& dir, const std::string& split,
                             const DatasetManifest& manifest);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace qtg
