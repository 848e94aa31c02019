#ifndef SYNCD_DENOISER_HPP
#define SYNCD_DENOISER_HPP

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "syncd/nn.hpp"
#include "syncd/rng.hpp"
#include "syncd/tensor.hpp"
#include "syncd/tensor_io.hpp"

namespace syncd {

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// x^t = alpha^t x + sigma^t eps, t in [0, T]. Flow mode is the linear path
// alpha = 1 - t/T, sigma = t/T; diffusion mode uses the cosine pair
// alpha = cos(pi/2 * t/T), sigma = sin(pi/2 * t/T), so alpha^0 = 1, sigma^T = 1
// in both modes.
struct NoiseSchedule {
    enum class Mode { diffusion, flow };
    Mode mode = Mode::flow;
    std::size_t steps = 1000;  // T

    // Continuous coefficients at s = t/T in [0, 1].
    double alpha_at(double s) const;
    double sigma_at(double s) const;
    double alpha(std::size_t t) const;
    double sigma(std::size_t t) const;
    void check_t(std::size_t t) const;
};

Tensor noise_sample(const Tensor& x, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);

// Regression target of the training objective: alpha^t eps - sigma^t x in
// diffusion mode, eps - x (t-independent) in flow mode.
Tensor regression_target(const Tensor& x, const Tensor& eps, std::size_t t,
                         const NoiseSchedule& sched);

enum class RefMode { noisy, clean };

struct ModelConfig {
    std::size_t layers = 2;
    std::size_t width = 32;
    std::size_t heads = 2;
    std::size_t grid_h = 8;
    std::size_t grid_w = 8;
    std::size_t channels = 3;      // latent/output channels
    std::size_t in_channels = 3;   // input channels (extra conditioning channels allowed)
    std::size_t text_len = 2;
    std::size_t num_captions = 16;
    RefMode ref_mode = RefMode::noisy;

    std::size_t head_dim() const { return width / heads; }
    std::size_t image_tokens() const { return grid_h * grid_w; }
    std::size_t seq_len() const { return text_len + image_tokens(); }
    void validate() const;
};

struct TrainSample {
    Tensor x;                      // target latent, [H x W x C]
    std::vector<Tensor> refs;      // reference latents, same grid
    std::vector<Tensor> ref_eps;   // per-reference noise (RefMode::noisy)
    int caption_id = -1;           // -1 = unconditional/null caption
    std::size_t t = 0;
    Tensor eps;                    // target noise
};

// Tiny MMDiT-style denoiser. The target stream is [caption tokens | image
// tokens]; reference streams contribute image tokens only, concatenated along
// the sequence inside every attention block. Target tokens attend to
// everything, reference tokens attend only to their own stream. Rotary rows
// are stacked per stream band: the target occupies rows [0, H), reference i
// rows [band_i*H, (band_i+1)*H) with band_i defaulting to i+1.
class DitModel {
public:
    DitModel(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }
    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    void zero_grads();

    // Predicted v for the target stream. In RefMode::noisy the references are
    // noised with (t, ref_eps[i]) before feature extraction; in RefMode::clean
    // they enter as-is and ref_eps is ignored.
    Tensor forward(const Tensor& x_t, std::size_t t, const NoiseSchedule& sched, int caption_id,
                   const std::vector<Tensor>& refs, const std::vector<Tensor>& ref_eps = {},
                   const std::vector<std::size_t>* ref_bands = nullptr) const;

    // Joint generation of N latents with masked shared attention. masks come
    // from build_msa_mask (one [n x N*n] bias per image). Optionally captures
    // last-layer text cross-attention per image as [heads x text_len x HW].
    std::vector<Tensor> forward_msa(const std::vector<Tensor>& x_ts, std::size_t t,
                                    const NoiseSchedule& sched, const std::vector<int>& caption_ids,
                                    const std::vector<Tensor>& masks,
                                    std::vector<Tensor>* cross_attn = nullptr) const;

    // Mean squared error between regression_target and the forward prediction.
    // With accumulate_grads, analytic gradients are added to Parameter::grad.
    double training_loss(const TrainSample& sample, const NoiseSchedule& sched,
                         bool accumulate_grads = false);

private:
    struct StreamSpec {
        Tensor tokens;  // [len_image_tokens x in_channels]
        int caption_id = -1;
        bool has_text = false;
        bool add_time = false;
        std::size_t band = 0;
    };
    struct PlanOutput {
        std::vector<Graph::Ref> image_outputs;  // per stream, [HW x channels]
    };
    PlanOutput run_plan(Graph& g, const std::vector<StreamSpec>& streams,
                        const Eigen::MatrixXd& joint_bias,
                        const std::vector<TokenPosition>& positions, double t_norm,
                        std::vector<Tensor>* cross_attn) const;

    Parameter* find(const std::string& name);
    const Parameter* find(const std::string& name) const;

    ModelConfig config_;
    std::uint64_t seed_;
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

struct AdamState {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<Eigen::MatrixXd> m, v;
};

// One Adam update on the mean batch loss; returns that loss. Throws
// DivergenceError on a non-finite loss, leaving params untouched.
double train_step(DitModel& model, const std::vector<TrainSample>& batch,
                  const NoiseSchedule& sched, AdamState& opt);

// Classifier-free dropout: P(drop both) = 0.05, P(drop refs only) = 0.1,
// P(drop caption only) = 0.1.
void apply_cfg_dropout(TrainSample& sample, Rng& rng);

// Checkpoint: every parameter tensor in the container format, preceded by a
// text manifest block (config, seed, step count).
void save_checkpoint(const std::filesystem::path& path, const DitModel& model,
                     std::size_t step_count);
struct Checkpoint {
    ModelConfig config;
    std::uint64_t seed = 0;
    std::size_t step_count = 0;
    std::unique_ptr<DitModel> model;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace syncd

#endif
