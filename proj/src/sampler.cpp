#include "syncd/sampler.hpp"

#include <cmath>
#include <numbers>

namespace syncd {

namespace {
constexpr double kNormFloor = 1e-12;
}

Tensor guidance_combine_normalized(const GuidanceStep& step, double lambda_i, double lambda_c) {
    const Tensor gi = step.g_i();
    const Tensor gc = step.g_c();
    const double ni = frobenius_norm(gi);
    const double nc = frobenius_norm(gc);
    const bool have_i = ni >= kNormFloor;
    const bool have_c = nc >= kNormFloor;
    if (!have_i && !have_c) return step.eps_uncond;  // degenerate

    const double g = have_i && have_c ? std::min(ni, nc) : (have_i ? ni : nc);
    Tensor out = step.eps_uncond;
    if (have_i) out = out + (lambda_i * g / ni) * gi;
    if (have_c) out = out + (lambda_c * g / nc) * gc;
    return out;
}

Tensor guidance_combine_vanilla(const GuidanceStep& step, double lambda_i, double lambda_c) {
    return step.eps_uncond + lambda_i * step.g_i() + lambda_c * step.g_c();
}

Tensor guidance_rescale(const Tensor& combined, const Tensor& eps_full, double phi) {
    if (phi < 0.0 || phi > 1.0) throw RangeError("guidance_rescale: phi must be in [0, 1]");
    if (!combined.same_shape(eps_full))
        throw ShapeError("guidance_rescale: shape mismatch");

    const std::size_t channels = combined.rank() == 3 ? combined.dim(2) : 1;
    const std::size_t spatial = combined.size() / channels;

    auto channel_std = [&](const Tensor& t, std::size_t c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < spatial; ++i) mean += t[i * channels + c];
        mean /= static_cast<double>(spatial);
        double var = 0.0;
        for (std::size_t i = 0; i < spatial; ++i) {
            const double d = t[i * channels + c] - mean;
            var += d * d;
        }
        return std::sqrt(var / static_cast<double>(spatial));
    };

    Tensor out = combined;
    for (std::size_t c = 0; c < channels; ++c) {
        const double sc = channel_std(combined, c);
        if (sc < kNormFloor) continue;
        const double r = channel_std(eps_full, c) / sc;
        const double factor = phi * r + (1.0 - phi);
        for (std::size_t i = 0; i < spatial; ++i) out[i * channels + c] *= factor;
    }
    return out;
}

double guidance_schedule_value(const GuidanceConfig& cfg, std::size_t step_index,
                               std::size_t steps) {
    if (step_index >= steps) throw RangeError("guidance schedule index out of range");
    if (steps == 1) return cfg.lambda_i;
    return cfg.lambda_i + cfg.lambda_i_ramp * static_cast<double>(step_index) /
                              static_cast<double>(steps - 1);
}

Tensor gaussian_tensor(const std::vector<std::size_t>& shape, Rng& rng) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

Tensor euler_sample(const GuidedModel& model, const NoiseSchedule& sched,
                    const GuidanceConfig& cfg, Rng& rng, std::size_t steps,
                    const std::vector<std::size_t>& shape) {
    if (steps == 0) throw RangeError("euler_sample: steps must be >= 1");
    Tensor x = gaussian_tensor(shape, rng);
    const double dt = (sched.mode == NoiseSchedule::Mode::flow ? 1.0 : std::numbers::pi / 2.0) /
                      static_cast<double>(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        const double t_norm = 1.0 - static_cast<double>(i) / static_cast<double>(steps);
        const double lambda_i = guidance_schedule_value(cfg, i, steps);

        GuidanceStep step;
        step.eps_uncond = model.predict(x, t_norm, true, false);
        Tensor combined;
        if (lambda_i == 0.0 && cfg.lambda_c == 0.0) {
            combined = step.eps_uncond;  // unguided trajectory, one model call
        } else {
            step.eps_base = model.predict(x, t_norm, false, false);
            step.eps_full = model.predict(x, t_norm, true, true);
            switch (cfg.mode) {
                case GuidanceMode::normalized:
                    combined = guidance_combine_normalized(step, lambda_i, cfg.lambda_c);
                    break;
                case GuidanceMode::vanilla:
                    combined = guidance_combine_vanilla(step, lambda_i, cfg.lambda_c);
                    break;
                case GuidanceMode::rescale:
                    combined = guidance_rescale(
                        guidance_combine_vanilla(step, lambda_i, cfg.lambda_c), step.eps_full,
                        cfg.phi);
                    break;
            }
        }
        for (std::size_t j = 0; j < x.size(); ++j) {
            x[j] -= dt * combined[j];
            if (!std::isfinite(x[j]))
                throw DivergenceError("euler_sample diverged at step " + std::to_string(i));
        }
    }
    return x;
}

DitGuidedModel::DitGuidedModel(const DitModel& model, const NoiseSchedule& sched, int caption_id,
                               std::vector<Tensor> refs, Rng ref_noise_rng)
    : model_(model), sched_(sched), caption_id_(caption_id), refs_(std::move(refs)) {
    if (model_.config().ref_mode == RefMode::noisy) {
        for (const Tensor& r : refs_) ref_eps_.push_back(gaussian_tensor(r.shape(), ref_noise_rng));
    }
}

Tensor DitGuidedModel::predict(const Tensor& x_t, double t_norm, bool use_refs,
                               bool use_caption) const {
    const auto t = static_cast<std::size_t>(
        std::lround(t_norm * static_cast<double>(sched_.steps)));
    static const std::vector<Tensor> kNoRefs;
    return model_.forward(x_t, t, sched_, use_caption ? caption_id_ : -1,
                          use_refs ? refs_ : kNoRefs, use_refs ? ref_eps_ : kNoRefs);
}

}  // namespace syncd
