#include "syncd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <sstream>
#include <unistd.h>

#include "syncd/image_io.hpp"
#include "syncd/sampler.hpp"
#include "syncd/tensor_io.hpp"

namespace syncd {

void GenSetConfig::validate() const {
    if (num_images < 1 || num_images > 3)
        throw ConfigError("num_images must be in [1, 3], got " + std::to_string(num_images));
    if (warp_fraction < 0.0 || warp_fraction > 1.0)
        throw ConfigError("warp_fraction must be in [0, 1]");
    if (steps == 0) throw ConfigError("steps must be >= 1");
    if (caption_ids.size() != num_images)
        throw ConfigError("need one caption id per image");
    if (!image_seeds.empty() && image_seeds.size() != num_images)
        throw ConfigError("image_seeds must be empty or one per image");
}

std::vector<double> ToyFeatureExtractor::embed(const Tensor& image) const {
    if (image.rank() != 3) throw ShapeError("extractor expects h x w x c, got " + image.shape_str());
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const std::size_t ph = std::min(pool_, h), pw = std::min(pool_, w);
    std::vector<double> e(ph * pw * c, 0.0);
    std::vector<double> counts(ph * pw, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
            const std::size_t br = r * ph / h, bc = col * pw / w;
            counts[br * pw + bc] += 1.0;
            for (std::size_t k = 0; k < c; ++k)
                e[(br * pw + bc) * c + k] += image[(r * w + col) * c + k];
        }
    }
    for (std::size_t b = 0; b < ph * pw; ++b)
        for (std::size_t k = 0; k < c; ++k) e[b * c + k] /= counts[b];
    double mean = 0.0;
    for (double v : e) mean += v;
    mean /= static_cast<double>(e.size());
    double norm = 0.0;
    for (double& v : e) {
        v -= mean;
        norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-15) {
        // Flat image: fall back to a fixed unit vector so the contract holds.
        e.assign(e.size(), 0.0);
        e[0] = 1.0;
        return e;
    }
    for (double& v : e) v /= norm;
    return e;
}

std::vector<double> CommandFeatureExtractor::embed(const Tensor& image) const {
    char tmpl[] = "/tmp/syncd_embed_XXXXXX";
    const int fd = mkstemp(tmpl);
    if (fd < 0) throw PipelineError("cannot create temp file for extractor input");
    close(fd);
    save_tensor(tmpl, image);
    const std::string cmd = command_ + " < " + tmpl;
    std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
    if (!pipe) {
        remove(tmpl);
        throw PipelineError("cannot launch extractor command: " + command_);
    }
    std::vector<double> e;
    double v;
    while (fscanf(pipe.get(), "%lf", &v) == 1) e.push_back(v);
    pipe.reset();
    remove(tmpl);
    if (e.empty()) throw PipelineError("extractor command produced no embedding");
    double norm = 0.0;
    for (double x : e) norm += x * x;
    norm = std::sqrt(norm);
    if (std::abs(norm - 1.0) > 1e-6) {
        if (norm < 1e-15) throw PipelineError("extractor returned a zero embedding");
        for (double& x : e) x /= norm;
    }
    return e;
}

double toy_aesthetic_score(const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("aesthetic scorer expects h x w x c");
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    double mean = 0.0;
    for (std::size_t i = 0; i < image.size(); ++i) mean += image[i];
    mean /= static_cast<double>(image.size());
    double var = 0.0;
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double d = image[i] - mean;
        var += d * d;
    }
    const double contrast = std::sqrt(var / static_cast<double>(image.size()));
    double sat = 0.0;
    if (c >= 2) {
        for (std::size_t i = 0; i < h * w; ++i) {
            double mn = image[i * c], mx = image[i * c];
            for (std::size_t k = 1; k < c; ++k) {
                mn = std::min(mn, image[i * c + k]);
                mx = std::max(mx, image[i * c + k]);
            }
            sat += mx - mn;
        }
        sat /= static_cast<double>(h * w);
    }
    const double score = 10.0 * (0.5 * std::min(1.0, contrast) + 0.5 * std::min(1.0, sat));
    return std::clamp(score, 0.0, 10.0);
}

ForegroundMask extract_fg_mask(const Tensor& cross_attn,
                               const std::vector<std::size_t>& object_token_ids,
                               double threshold, std::size_t grid_h, std::size_t grid_w) {
    if (object_token_ids.empty()) throw RangeError("extract_fg_mask: empty object token set");
    if (cross_attn.rank() != 3) throw ShapeError("cross_attn must be heads x text x HW");
    const std::size_t heads = cross_attn.dim(0), text = cross_attn.dim(1), hw = cross_attn.dim(2);
    if (hw != grid_h * grid_w) throw ShapeError("cross_attn spatial size mismatch");

    std::vector<double> score(hw, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t t : object_token_ids) {
            if (t >= text) throw RangeError("object token id out of range");
            for (std::size_t i = 0; i < hw; ++i) score[i] += cross_attn.at({h, t, i});
        }
    }
    const double lo = *std::min_element(score.begin(), score.end());
    const double hi = *std::max_element(score.begin(), score.end());

    ForegroundMask mask;
    mask.h = grid_h;
    mask.w = grid_w;
    mask.per_image.emplace_back(hw, 0);
    for (std::size_t i = 0; i < hw; ++i) {
        // Degenerate constant map normalizes to all-true.
        const double norm = hi > lo ? (score[i] - lo) / (hi - lo) : 1.0;
        mask.per_image[0][i] = norm >= threshold ? 1 : 0;
    }
    return mask;
}

double pairwise_similarity(const std::vector<std::vector<double>>& embeddings) {
    if (embeddings.size() < 2) throw RangeError("pairwise_similarity needs >= 2 embeddings");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < embeddings.size(); ++a) {
        for (std::size_t b = a + 1; b < embeddings.size(); ++b) {
            if (embeddings[a].size() != embeddings[b].size())
                throw ShapeError("embedding dimensions disagree");
            double dot = 0.0;
            for (std::size_t i = 0; i < embeddings[a].size(); ++i)
                dot += embeddings[a][i] * embeddings[b][i];
            sum += dot;
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

namespace {
std::string config_hash(const GenSetConfig& cfg) {
    std::ostringstream os;
    os << cfg.num_images << "|" << (cfg.path == GenPath::rigid ? "rigid" : "deformable") << "|"
       << cfg.steps << "|" << cfg.warp_fraction << "|" << cfg.depth_guidance << "|"
       << cfg.text_guidance << "|" << cfg.mask_threshold << "|" << cfg.negative_prompt << "|"
       << cfg.seed << "|" << cfg.render_scale;
    for (int c : cfg.caption_ids) os << "|" << c;
    const std::string s = os.str();
    return hash_hex(hash_bytes(s.data(), s.size()));
}

// Depth conditioning channel: normalized inverse depth on the latent grid.
std::vector<double> inverse_depth_channel(const DepthMap& dm) {
    std::vector<double> inv(dm.depth.size(), 0.0);
    double mx = 0.0;
    for (std::size_t i = 0; i < dm.depth.size(); ++i) {
        if (dm.depth[i] > 0.0) {
            inv[i] = 1.0 / dm.depth[i];
            mx = std::max(mx, inv[i]);
        }
    }
    if (mx > 0.0)
        for (double& v : inv) v /= mx;
    return inv;
}

Tensor with_depth_channel(const Tensor& x, const std::vector<double>* inv_depth) {
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    Tensor out({h, w, c + 1});
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t k = 0; k < c; ++k) out[i * (c + 1) + k] = x[i * c + k];
        out[i * (c + 1) + c] = inv_depth ? (*inv_depth)[i] : 0.0;
    }
    return out;
}
}  // namespace

ImageSet generate_set(const GenSetConfig& cfg, const DitModel& model, const Scene* scene,
                      Rng& rng) {
    cfg.validate();
    const ModelConfig& mc = model.config();
    const std::size_t N = cfg.num_images;
    const std::size_t H = mc.grid_h, W = mc.grid_w, C = mc.channels;
    const bool rigid = cfg.path == GenPath::rigid;
    if (rigid && !scene) throw ConfigError("rigid path requires a scene");
    if (rigid && mc.in_channels != C + 1)
        throw ConfigError("rigid path needs a model with a depth input channel");
    if (!rigid && mc.in_channels != C)
        throw ConfigError("deformable path expects in_channels == channels");

    const NoiseSchedule sched{NoiseSchedule::Mode::flow, cfg.steps};
    const TokenLayout layout{N, mc.text_len, H, W};

    // Rigid-path geometry: views at latent and image resolution, pre-computed
    // pairwise correspondences, ground-truth foreground masks from depth.
    std::vector<std::vector<double>> inv_depth(N);
    std::vector<std::vector<CorrespondenceMap>> corr(N);  // corr[i][j]: j -> i
    ForegroundMask fg;
    fg.h = H;
    fg.w = W;
    fg.per_image.assign(N, std::vector<std::uint8_t>(H * W, 0));
    if (rigid) {
        const auto img_size = static_cast<std::size_t>(
            std::lround(static_cast<double>(W) * cfg.render_scale));
        std::vector<View> views = select_views(*scene, rng, N, 0.1, img_size);
        const double depth_tol = 0.05 * scene->diameter();
        for (std::size_t i = 0; i < N; ++i) {
            // Latent-resolution render for conditioning and masks.
            Camera lat_cam = views[i].camera;
            const double s = static_cast<double>(W) / static_cast<double>(img_size);
            lat_cam.fx *= s;
            lat_cam.fy *= s;
            lat_cam.cx = (static_cast<double>(W) - 1.0) / 2.0;
            lat_cam.cy = (static_cast<double>(H) - 1.0) / 2.0;
            lat_cam.height = H;
            lat_cam.width = W;
            const DepthMap lat_depth = scene->render_depth(lat_cam);
            inv_depth[i] = inverse_depth_channel(lat_depth);
            for (std::size_t p = 0; p < H * W; ++p)
                fg.per_image[i][p] = lat_depth.depth[p] > 0.0 ? 1 : 0;
        }
        for (std::size_t i = 0; i < N; ++i) {
            corr[i].resize(N);
            for (std::size_t j = 0; j < N; ++j) {
                if (i == j) continue;
                corr[i][j] = correspondence_map(views[j], views[i], depth_tol);
            }
        }
    }

    // Initial latents, one draw per image in order.
    std::vector<Tensor> x;
    x.reserve(N);
    for (std::size_t i = 0; i < N; ++i) {
        if (cfg.image_seeds.empty()) {
            x.push_back(gaussian_tensor({H, W, C}, rng));
        } else {
            Rng img_rng(cfg.image_seeds[i]);
            x.push_back(gaussian_tensor({H, W, C}, img_rng));
        }
    }

    const int uncond_caption =
        cfg.negative_prompt.empty()
            ? -1
            : static_cast<int>(hash_bytes(cfg.negative_prompt.data(), cfg.negative_prompt.size()) %
                               mc.num_captions);
    std::vector<int> uncond_ids(N, uncond_caption);

    const auto warp_until = static_cast<std::size_t>(
        std::ceil(cfg.warp_fraction * static_cast<double>(cfg.steps)));
    std::vector<std::size_t> warp_steps;

    std::vector<std::size_t> all_text_tokens(mc.text_len);
    for (std::size_t t = 0; t < mc.text_len; ++t) all_text_tokens[t] = t;

    const double dt = 1.0 / static_cast<double>(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const double t_norm = 1.0 - static_cast<double>(step) / static_cast<double>(cfg.steps);
        const auto t = static_cast<std::size_t>(std::lround(t_norm * static_cast<double>(sched.steps)));
        const bool first_step = cfg.share_attention && step == 0;
        // Attention sharing off: empty foreground and no first-step relaxation
        // block every cross-image entry, so images denoise independently.
        ForegroundMask empty_fg = fg;
        if (!cfg.share_attention)
            for (auto& m : empty_fg.per_image) std::fill(m.begin(), m.end(), 0);
        const std::vector<Tensor> bias =
            build_msa_mask(layout, cfg.share_attention ? fg : empty_fg, first_step);

        std::vector<Tensor> v(N);
        std::vector<Tensor> cross_attn;
        if (rigid) {
            std::vector<Tensor> x_depth(N), x_nodepth(N);
            for (std::size_t i = 0; i < N; ++i) {
                x_depth[i] = with_depth_channel(x[i], &inv_depth[i]);
                x_nodepth[i] = with_depth_channel(x[i], nullptr);
            }
            const std::vector<Tensor> v_uu = model.forward_msa(x_nodepth, t, sched, uncond_ids, bias);
            const std::vector<Tensor> v_du = model.forward_msa(x_depth, t, sched, uncond_ids, bias);
            const std::vector<Tensor> v_dc =
                model.forward_msa(x_depth, t, sched, cfg.caption_ids, bias, &cross_attn);
            for (std::size_t i = 0; i < N; ++i) {
                v[i] = v_uu[i] + cfg.depth_guidance * (v_du[i] - v_uu[i]) +
                       cfg.text_guidance * (v_dc[i] - v_du[i]);
            }
        } else {
            const std::vector<Tensor> v_u = model.forward_msa(x, t, sched, uncond_ids, bias);
            const std::vector<Tensor> v_c =
                model.forward_msa(x, t, sched, cfg.caption_ids, bias, &cross_attn);
            for (std::size_t i = 0; i < N; ++i) {
                GuidanceStep gs{v_u[i], v_u[i], v_c[i]};
                v[i] = guidance_combine_vanilla(gs, 0.0, cfg.text_guidance);
            }
        }

        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t p = 0; p < x[i].size(); ++p) {
                x[i][p] -= dt * v[i][p];
                if (!std::isfinite(x[i][p]))
                    throw DivergenceError("generate_set diverged at step " + std::to_string(step));
            }
        }

        if (rigid && step < warp_until) {
            const std::vector<Tensor> snapshot = x;
            for (std::size_t i = 0; i < N; ++i) {
                std::vector<const Tensor*> srcs;
                std::vector<const CorrespondenceMap*> maps;
                for (std::size_t j = 0; j < N; ++j) {
                    if (j == i) continue;
                    srcs.push_back(&snapshot[j]);
                    maps.push_back(&corr[i][j]);
                }
                if (!srcs.empty()) x[i] = warp_features_multi(srcs, maps, x[i], cfg.render_scale);
            }
            warp_steps.push_back(step);
        }

        if (!rigid && mc.text_len > 0) {
            // Cross-attention masks recomputed every step for the next one.
            for (std::size_t i = 0; i < N; ++i) {
                const ForegroundMask m =
                    extract_fg_mask(cross_attn[i], all_text_tokens, cfg.mask_threshold, H, W);
                fg.per_image[i] = m.per_image[0];
            }
        }
    }

    ImageSet set;
    set.set_id = "set-" + std::to_string(cfg.seed) + "-" + config_hash(cfg).substr(0, 8);
    set.images = std::move(x);
    set.masks = fg;
    set.prompts = cfg.prompts;
    if (set.prompts.size() != N) set.prompts.resize(N);
    set.object_description = cfg.object_description;
    set.path = cfg.path;
    set.provenance = {cfg.seed, config_hash(cfg), warp_steps};
    return set;
}

FilterDecision filter_set(const ImageSet& set, const FeatureExtractor& extractor,
                          const AestheticScorer& aesthetic, const FilterThresholds& th) {
    FilterDecision d;
    std::vector<std::vector<double>> embeddings;
    try {
        for (const Tensor& img : set.images) embeddings.push_back(extractor.embed(img));
    } catch (const std::exception& e) {
        throw PipelineError("feature extraction failed for set " + set.set_id + ": " + e.what());
    }
    for (std::size_t i = 0; i < set.images.size(); ++i) {
        const double score = aesthetic(set.images[i]);
        d.aesthetic.push_back(score);
        if (score < th.aesthetic_min) {
            d.keep = false;
            std::ostringstream os;
            os << "aesthetic: image " << i << " score " << score << " < " << th.aesthetic_min;
            d.reasons.push_back(os.str());
        }
    }
    d.similarity = embeddings.size() >= 2 ? pairwise_similarity(embeddings) : 1.0;
    if (d.similarity < th.similarity_min) {
        d.keep = false;
        std::ostringstream os;
        os << "similarity: " << d.similarity << " < " << th.similarity_min;
        d.reasons.push_back(os.str());
    }
    return d;
}

}  // namespace syncd
