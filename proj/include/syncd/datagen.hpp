#ifndef SYNCD_DATAGEN_HPP
#define SYNCD_DATAGEN_HPP

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "syncd/attention.hpp"
#include "syncd/denoiser.hpp"
#include "syncd/geometry.hpp"
#include "syncd/rng.hpp"
#include "syncd/tensor.hpp"

namespace syncd {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class GenPath { rigid, deformable };

struct GenSetConfig {
    std::size_t num_images = 2;  // N, supported range 1..3
    GenPath path = GenPath::deformable;
    std::size_t steps = 30;
    double warp_fraction = 0.2;
    double depth_guidance = 10.0;  // rigid path
    double text_guidance = 2.5;    // rigid default; deformable runs use 3.5
    double mask_threshold = 0.4;   // deformable cross-attention mask level
    std::string negative_prompt;
    std::uint64_t seed = 0;
    std::vector<int> caption_ids;          // one per image
    std::vector<std::string> prompts;      // one per image, provenance text
    std::string object_description;
    double render_scale = 4.0;   // image resolution / latent resolution (rigid)
    bool share_attention = true;  // false = fully independent per-image denoising
    // Optional per-image noise seeds; empty = draw initial latents from the
    // run rng in image order. Equal seeds give equal initial noise.
    std::vector<std::uint64_t> image_seeds;

    void validate() const;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<std::size_t> warp_steps;
};

struct FilterOutcome {
    bool evaluated = false;
    bool kept = false;
    std::vector<std::string> reasons;
    std::vector<double> aesthetic;
    double similarity = 0.0;
};

struct ImageSet {
    std::string set_id;
    std::vector<Tensor> images;  // [H x W x C]
    ForegroundMask masks;        // one per image
    std::vector<std::string> prompts;
    std::string object_description;
    GenPath path = GenPath::deformable;
    Provenance provenance;
    FilterOutcome filter;
};

struct FilterThresholds {
    double aesthetic_min = 6.0;
    double similarity_min = 0.7;
};

// image -> unit-norm embedding of fixed dimension.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<double> embed(const Tensor& image) const = 0;
};

// Downsampled, mean-removed, L2-normalized pixels. Deterministic stand-in for
// a learned feature backbone.
class ToyFeatureExtractor : public FeatureExtractor {
public:
    explicit ToyFeatureExtractor(std::size_t pool = 4) : pool_(pool) {}
    std::vector<double> embed(const Tensor& image) const override;

private:
    std::size_t pool_;
};

// External-process adapter: image is piped as a container tensor on stdin,
// the command prints the embedding as whitespace-separated floats.
class CommandFeatureExtractor : public FeatureExtractor {
public:
    explicit CommandFeatureExtractor(std::string command) : command_(std::move(command)) {}
    std::vector<double> embed(const Tensor& image) const override;

private:
    std::string command_;
};

using AestheticScorer = std::function<double(const Tensor&)>;

// Contrast+saturation heuristic in [0, 10]; exercises thresholding only.
double toy_aesthetic_score(const Tensor& image);

// Average attention over heads and object tokens, min-max normalized per
// image, thresholded. cross_attn is [heads x text_len x HW].
ForegroundMask extract_fg_mask(const Tensor& cross_attn,
                               const std::vector<std::size_t>& object_token_ids,
                               double threshold, std::size_t grid_h, std::size_t grid_w);

// Mean cosine similarity over all unordered pairs of unit vectors.
double pairwise_similarity(const std::vector<std::vector<double>>& embeddings);

// Joint consistent-set generation: N latents denoised in parallel with masked
// shared attention; the rigid path adds a depth input channel and warps
// latents from the other views during the first ceil(warp_fraction*steps)
// steps.
ImageSet generate_set(const GenSetConfig& cfg, const DitModel& model, const Scene* scene,
                      Rng& rng);

struct FilterDecision {
    bool keep = true;
    std::vector<std::string> reasons;
    std::vector<double> aesthetic;
    double similarity = 0.0;
};

FilterDecision filter_set(const ImageSet& set, const FeatureExtractor& extractor,
                          const AestheticScorer& aesthetic, const FilterThresholds& th);

// Line-delimited manifest; one JSON record per set, image/mask tensors stored
// as container files next to the manifest and referenced by relative path and
// content hash. Reading verifies every hash.
void write_manifest(const std::vector<ImageSet>& sets, const std::filesystem::path& path);
std::vector<ImageSet> read_manifest(const std::filesystem::path& path);

}  // namespace syncd

#endif
