#ifndef SYNCD_SAMPLER_HPP
#define SYNCD_SAMPLER_HPP

#include <cstdint>
#include <vector>

#include "syncd/denoiser.hpp"
#include "syncd/rng.hpp"
#include "syncd/tensor.hpp"

namespace syncd {

enum class GuidanceMode { normalized, vanilla, rescale };

struct GuidanceConfig {
    double lambda_i = 1.0;
    double lambda_c = 1.5;
    GuidanceMode mode = GuidanceMode::normalized;
    double phi = 0.6;            // rescale blend, in [0, 1]
    double lambda_i_ramp = 0.0;  // total linear increase of lambda_i over the run
};

// The three conditioning branches evaluated at one denoising step.
// g_i = eps_uncond - eps_base (image guidance),
// g_c = eps_full - eps_uncond (text guidance).
struct GuidanceStep {
    Tensor eps_uncond;  // model(x^t, refs, null)
    Tensor eps_base;    // model(x^t, null, null)
    Tensor eps_full;    // model(x^t, refs, c)

    Tensor g_i() const { return eps_uncond - eps_base; }
    Tensor g_c() const { return eps_full - eps_uncond; }
};

// eps_uncond + lambda_i*(|g|/|g_i|)*g_i + lambda_c*(|g|/|g_c|)*g_c with
// |g| = min(|g_i|, |g_c|), Frobenius norms over the whole tensor. A guidance
// vector with norm < 1e-12 drops out and |g| falls back to the other's norm;
// if both are degenerate the base prediction eps_uncond is returned.
Tensor guidance_combine_normalized(const GuidanceStep& step, double lambda_i, double lambda_c);

// eps_uncond + lambda_i*g_i + lambda_c*g_c, no normalization.
Tensor guidance_combine_vanilla(const GuidanceStep& step, double lambda_i, double lambda_c);

// Per-channel std-ratio correction toward the conditioned prediction:
// phi*(r*combined) + (1-phi)*combined with r = std(eps_full)/std(combined).
// Channels with std(combined) < 1e-12 pass through unchanged. For rank-3
// tensors the channel is the last dimension; otherwise the whole tensor is
// one channel.
Tensor guidance_rescale(const Tensor& combined, const Tensor& eps_full, double phi);

// lambda_i at a given step: start + ramp * i/(steps-1).
double guidance_schedule_value(const GuidanceConfig& cfg, std::size_t step_index,
                               std::size_t steps);

// Model surface the sampler drives; the three guidance branches toggle the
// conditioning inputs.
class GuidedModel {
public:
    virtual ~GuidedModel() = default;
    virtual Tensor predict(const Tensor& x_t, double t_norm, bool use_refs,
                           bool use_caption) const = 0;
};

Tensor gaussian_tensor(const std::vector<std::size_t>& shape, Rng& rng);

// Euler sampling from unit Gaussian noise. Flow mode advances t from 1 to 0
// with dt = 1/steps (x <- x - dt*v); diffusion mode advances the cosine angle
// theta from pi/2 to 0 with dtheta = (pi/2)/steps, where v = dx/dtheta.
// Guidance is combined per cfg.mode with lambda_i from the schedule.
Tensor euler_sample(const GuidedModel& model, const NoiseSchedule& sched,
                    const GuidanceConfig& cfg, Rng& rng, std::size_t steps,
                    const std::vector<std::size_t>& shape);

// Adapter binding a DitModel plus fixed caption/references to GuidedModel.
class DitGuidedModel : public GuidedModel {
public:
    DitGuidedModel(const DitModel& model, const NoiseSchedule& sched, int caption_id,
                   std::vector<Tensor> refs, Rng ref_noise_rng);
    Tensor predict(const Tensor& x_t, double t_norm, bool use_refs,
                   bool use_caption) const override;

private:
    const DitModel& model_;
    const NoiseSchedule& sched_;
    int caption_id_;
    std::vector<Tensor> refs_;
    std::vector<Tensor> ref_eps_;  // fixed per run; reused at every step
};

}  // namespace syncd

#endif
