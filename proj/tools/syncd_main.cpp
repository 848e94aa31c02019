// syncd: consistent image-set generation toolkit. One binary, subcommand
// style; all randomness flows from a single --seed, flags override the config
// file.
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "syncd/attention.hpp"
#include "syncd/datagen.hpp"
#include "syncd/denoiser.hpp"
#include "syncd/eval.hpp"
#include "syncd/geometry.hpp"
#include "syncd/image_io.hpp"
#include "syncd/prompts.hpp"
#include "syncd/sampler.hpp"
#include "syncd/tensor_io.hpp"

namespace {
using nlohmann::json;
using namespace syncd;

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("SYNCD_LOG");
        if (!env) return LogLevel::info;
        const std::string s = env;
        if (s == "debug") return LogLevel::debug;
        if (s == "warn") return LogLevel::warn;
        if (s == "error") return LogLevel::error;
        return LogLevel::info;
    }();
    return level;
}

void log(LogLevel lvl, const std::string& msg) {
    static const char* names[] = {"debug", "info", "warn", "error"};
    if (lvl >= log_level())
        std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << msg << "\n";
}

// Every tunable in one serializable record; unknown keys are rejected and the
// hash feeds provenance.
struct RunConfig {
    std::string schedule_mode = "flow";
    std::size_t layers = 2, width = 32, heads = 2, grid = 8, channels = 3;
    std::size_t text_len = 2, num_captions = 16;
    std::string ref_mode = "noisy";
    std::size_t num_images = 2;
    std::string gen_path = "deformable";
    std::size_t steps = 30;
    double warp_fraction = 0.2;
    double depth_guidance = 10.0;
    double text_guidance = 2.5;
    double mask_threshold = 0.4;
    double aesthetic_min = 6.0;
    double similarity_min = 0.7;
    double lambda_i = 8.0;
    double lambda_c = 2.5;
    double lambda_i_ramp = 5.0;
    double phi = 0.6;
    std::string guidance_mode = "normalized";
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string extractor = "toy";
};

json to_json(const RunConfig& c) {
    return json{{"schedule_mode", c.schedule_mode},
                {"layers", c.layers},
                {"width", c.width},
                {"heads", c.heads},
                {"grid", c.grid},
                {"channels", c.channels},
                {"text_len", c.text_len},
                {"num_captions", c.num_captions},
                {"ref_mode", c.ref_mode},
                {"num_images", c.num_images},
                {"gen_path", c.gen_path},
                {"steps", c.steps},
                {"warp_fraction", c.warp_fraction},
                {"depth_guidance", c.depth_guidance},
                {"text_guidance", c.text_guidance},
                {"mask_threshold", c.mask_threshold},
                {"aesthetic_min", c.aesthetic_min},
                {"similarity_min", c.similarity_min},
                {"lambda_i", c.lambda_i},
                {"lambda_c", c.lambda_c},
                {"lambda_i_ramp", c.lambda_i_ramp},
                {"phi", c.phi},
                {"guidance_mode", c.guidance_mode},
                {"seed", c.seed},
                {"jobs", c.jobs},
                {"extractor", c.extractor}};
}

RunConfig from_json(const json& j) {
    RunConfig c;
    const json known = to_json(c);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key()))
            throw ConfigError("unknown config key: " + it.key());
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("schedule_mode", c.schedule_mode);
    get("layers", c.layers);
    get("width", c.width);
    get("heads", c.heads);
    get("grid", c.grid);
    get("channels", c.channels);
    get("text_len", c.text_len);
    get("num_captions", c.num_captions);
    get("ref_mode", c.ref_mode);
    get("num_images", c.num_images);
    get("gen_path", c.gen_path);
    get("steps", c.steps);
    get("warp_fraction", c.warp_fraction);
    get("depth_guidance", c.depth_guidance);
    get("text_guidance", c.text_guidance);
    get("mask_threshold", c.mask_threshold);
    get("aesthetic_min", c.aesthetic_min);
    get("similarity_min", c.similarity_min);
    get("lambda_i", c.lambda_i);
    get("lambda_c", c.lambda_c);
    get("lambda_i_ramp", c.lambda_i_ramp);
    get("phi", c.phi);
    get("guidance_mode", c.guidance_mode);
    get("seed", c.seed);
    get("jobs", c.jobs);
    get("extractor", c.extractor);
    return c;
}

RunConfig load_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config json: ") + e.what());
    }
    return from_json(j);
}

std::string config_hash_hex(const RunConfig& c) {
    const std::string s = to_json(c).dump();
    return hash_hex(hash_bytes(s.data(), s.size()));
}

void write_provenance(const std::filesystem::path& out, const RunConfig& cfg,
                      const std::string& subcommand) {
    json p{{"tool", "syncd"},
           {"version", 1},
           {"subcommand", subcommand},
           {"seed", cfg.seed},
           {"config_hash", config_hash_hex(cfg)},
           {"config", to_json(cfg)}};
    const std::filesystem::path path = out.string() + ".provenance.json";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot write provenance record: " + path.string());
    f << p.dump(2) << "\n";
    log(LogLevel::debug, "provenance written to " + path.string());
}

ModelConfig model_config(const RunConfig& c, bool depth_channel) {
    ModelConfig mc;
    mc.layers = c.layers;
    mc.width = c.width;
    mc.heads = c.heads;
    mc.grid_h = c.grid;
    mc.grid_w = c.grid;
    mc.channels = c.channels;
    mc.in_channels = depth_channel ? c.channels + 1 : c.channels;
    mc.text_len = c.text_len;
    mc.num_captions = c.num_captions;
    mc.ref_mode = c.ref_mode == "clean" ? RefMode::clean : RefMode::noisy;
    mc.validate();
    return mc;
}

NoiseSchedule schedule(const RunConfig& c, std::size_t steps) {
    NoiseSchedule s;
    s.mode = c.schedule_mode == "diffusion" ? NoiseSchedule::Mode::diffusion
                                            : NoiseSchedule::Mode::flow;
    s.steps = steps;
    return s;
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& spec) {
    if (spec == "toy") return std::make_unique<ToyFeatureExtractor>();
    if (spec.rfind("cmd:", 0) == 0) return std::make_unique<CommandFeatureExtractor>(spec.substr(4));
    throw ConfigError("extractor must be 'toy' or 'cmd:<path>', got: " + spec);
}

void ensure_parent(const std::filesystem::path& p) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

GuidanceMode parse_guidance_mode(const std::string& s) {
    if (s == "normalized") return GuidanceMode::normalized;
    if (s == "vanilla") return GuidanceMode::vanilla;
    if (s == "rescale") return GuidanceMode::rescale;
    throw ConfigError("guidance mode must be normalized|vanilla|rescale, got: " + s);
}

// ---------------------------------------------------------------------------

int cmd_gen_set(const RunConfig& cfg, const std::string& out_path, std::size_t n_sets,
                const std::vector<std::string>& prompts) {
    const bool rigid = cfg.gen_path == "rigid";
    const DitModel model(model_config(cfg, rigid), cfg.seed);
    const Rng master(cfg.seed);

    std::vector<ImageSet> sets(n_sets);
    std::vector<std::string> errors;
    std::mutex err_mu;
    std::atomic<std::size_t> next{0};
    const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);

    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < n_sets; i = next.fetch_add(1)) {
            try {
                Rng rng = master.split(i);
                GenSetConfig gc;
                gc.num_images = cfg.num_images;
                gc.path = rigid ? GenPath::rigid : GenPath::deformable;
                gc.steps = cfg.steps;
                gc.warp_fraction = cfg.warp_fraction;
                gc.depth_guidance = cfg.depth_guidance;
                gc.text_guidance = cfg.text_guidance;
                gc.mask_threshold = cfg.mask_threshold;
                gc.seed = rng.seed();
                gc.object_description = "object " + std::to_string(i);
                for (std::size_t k = 0; k < cfg.num_images; ++k) {
                    gc.caption_ids.push_back(
                        static_cast<int>(rng.next_below(cfg.num_captions)));
                    gc.prompts.push_back(k < prompts.size()
                                             ? prompts[k]
                                             : gc.object_description + ", view " +
                                                   std::to_string(k));
                }
                std::unique_ptr<Scene> scene;
                if (rigid) scene = std::make_unique<Scene>(Scene::random(rng.next_u64()));
                ImageSet set = generate_set(gc, model, scene.get(), rng);
                set.set_id = "set" + std::to_string(i);
                sets[i] = std::move(set);
            } catch (const std::exception& e) {
                std::scoped_lock lk(err_mu);
                errors.push_back("set " + std::to_string(i) + ": " + e.what());
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j + 1 < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (!errors.empty()) {
        for (const auto& e : errors) log(LogLevel::error, e);
        return 2;
    }

    write_manifest(sets, out_path);
    const std::filesystem::path dir =
        std::filesystem::path(out_path).has_parent_path()
            ? std::filesystem::path(out_path).parent_path()
            : ".";
    for (const ImageSet& set : sets)
        for (std::size_t k = 0; k < set.images.size(); ++k)
            write_png_preview(dir / (set.set_id + "_img" + std::to_string(k) + ".png"),
                              set.images[k]);
    write_provenance(out_path, cfg, "gen-set");
    log(LogLevel::info, "wrote " + std::to_string(n_sets) + " sets to " + out_path);
    return 0;
}

int cmd_filter(const RunConfig& cfg, const std::string& manifest_in,
               const std::string& manifest_out) {
    std::vector<ImageSet> sets = read_manifest(manifest_in);
    const auto extractor = make_extractor(cfg.extractor);
    const FilterThresholds th{cfg.aesthetic_min, cfg.similarity_min};
    std::size_t kept = 0;
    for (ImageSet& set : sets) {
        const FilterDecision d = filter_set(set, *extractor, toy_aesthetic_score, th);
        set.filter.evaluated = true;
        set.filter.kept = d.keep;
        set.filter.reasons = d.reasons;
        set.filter.aesthetic = d.aesthetic;
        set.filter.similarity = d.similarity;
        if (d.keep) ++kept;
        for (const auto& r : d.reasons) log(LogLevel::debug, set.set_id + " rejected: " + r);
    }
    write_manifest(sets, manifest_out);
    write_provenance(manifest_out, cfg, "filter");
    std::cout << "kept " << kept << " of " << sets.size() << " sets\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, std::size_t train_steps, std::size_t batch_size,
              std::size_t num_refs, const std::string& out_path) {
    DitModel model(model_config(cfg, false), cfg.seed);
    const ModelConfig& mc = model.config();
    const NoiseSchedule sched = schedule(cfg, 1000);
    Rng rng = Rng(cfg.seed).split(1);

    // Per-caption base pattern; references are noisy copies of the target's
    // pattern, so conditioning carries real signal.
    std::vector<Tensor> patterns;
    Rng pat_rng = Rng(cfg.seed).split(2);
    for (std::size_t cpt = 0; cpt < mc.num_captions; ++cpt)
        patterns.push_back(gaussian_tensor({mc.grid_h, mc.grid_w, mc.channels}, pat_rng));

    AdamState opt;
    double first_loss = -1.0;
    for (std::size_t step = 0; step < train_steps; ++step) {
        std::vector<TrainSample> batch;
        for (std::size_t b = 0; b < batch_size; ++b) {
            TrainSample s;
            const auto cpt = rng.next_below(mc.num_captions);
            s.caption_id = static_cast<int>(cpt);
            s.x = patterns[cpt];
            for (std::size_t r = 0; r < num_refs; ++r) {
                Tensor ref = patterns[cpt];
                const Tensor jitter = gaussian_tensor(ref.shape(), rng);
                for (std::size_t p = 0; p < ref.size(); ++p) ref[p] += 0.1 * jitter[p];
                s.refs.push_back(std::move(ref));
                s.ref_eps.push_back(gaussian_tensor(s.x.shape(), rng));
            }
            s.t = 1 + rng.next_below(sched.steps);
            s.eps = gaussian_tensor(s.x.shape(), rng);
            apply_cfg_dropout(s, rng);
            batch.push_back(std::move(s));
        }
        const double loss = train_step(model, batch, sched, opt);
        if (first_loss < 0.0) first_loss = loss;
        if (step % 20 == 0)
            log(LogLevel::info,
                "step " + std::to_string(step) + " loss " + std::to_string(loss));
    }
    ensure_parent(out_path);
    save_checkpoint(out_path, model, train_steps);
    write_provenance(out_path, cfg, "train");
    log(LogLevel::info, "checkpoint saved to " + out_path +
                            " (first loss " + std::to_string(first_loss) + ")");
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& checkpoint_path,
               const std::vector<std::string>& ref_paths, int caption_id,
               const std::string& out_path, bool png) {
    std::unique_ptr<DitModel> model;
    if (!checkpoint_path.empty()) {
        Checkpoint ck = load_checkpoint(checkpoint_path);
        model = std::move(ck.model);
    } else {
        model = std::make_unique<DitModel>(model_config(cfg, false), cfg.seed);
    }
    const ModelConfig& mc = model->config();
    const NoiseSchedule sched = schedule(cfg, 1000);

    std::vector<Tensor> refs;
    for (const auto& p : ref_paths) refs.push_back(load_tensor(p));

    Rng rng(cfg.seed);
    const DitGuidedModel guided(*model, sched, caption_id, refs, rng.split(1));
    GuidanceConfig gcfg;
    gcfg.lambda_i = cfg.lambda_i;
    gcfg.lambda_c = cfg.lambda_c;
    gcfg.lambda_i_ramp = cfg.lambda_i_ramp;
    gcfg.phi = cfg.phi;
    gcfg.mode = parse_guidance_mode(cfg.guidance_mode);

    const Tensor x = euler_sample(guided, sched, gcfg, rng, cfg.steps,
                                  {mc.grid_h, mc.grid_w, mc.channels});
    ensure_parent(out_path);
    save_tensor(out_path, x);
    if (png) write_png_preview(std::filesystem::path(out_path).replace_extension(".png"), x);
    write_provenance(out_path, cfg, "sample");
    std::cout << "sample hash " << hash_hex(hash_file(out_path)) << "\n";
    return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& scores_in, const std::string& scores_out,
             const std::string& manifest_path) {
    if (!scores_in.empty()) {
        const auto rows = combine_scores(read_score_csv(scores_in));
        ensure_parent(scores_out);
        write_score_csv(scores_out, rows);
        write_provenance(scores_out, cfg, "eval");
        double mean = 0.0;
        for (const auto& r : rows) mean += r.combined;
        if (!rows.empty()) mean /= static_cast<double>(rows.size());
        std::cout << "geometric score mean " << mean << " over " << rows.size() << " samples\n";
    }
    if (!manifest_path.empty()) {
        const auto sets = read_manifest(manifest_path);
        const auto extractor = make_extractor(cfg.extractor);
        const ClusterSimilarity sim = intra_cluster_similarity(sets, *extractor);
        for (std::size_t i = 0; i < sim.per_set.size(); ++i)
            std::cout << sim.set_ids[i] << " intra-cluster similarity " << sim.per_set[i] << "\n";
        std::cout << "mean intra-cluster similarity " << sim.mean << " over "
                  << sim.per_set.size() << " sets\n";
    }
    return 0;
}

int cmd_dump_mask(const RunConfig& cfg, bool first_step, const std::string& out_prefix) {
    const TokenLayout layout{cfg.num_images, cfg.text_len, cfg.grid, cfg.grid};
    Rng rng(cfg.seed);
    ForegroundMask fg;
    fg.h = cfg.grid;
    fg.w = cfg.grid;
    for (std::size_t i = 0; i < cfg.num_images; ++i) {
        std::vector<std::uint8_t> m(cfg.grid * cfg.grid);
        for (auto& v : m) v = rng.uniform() < 0.5 ? 1 : 0;
        fg.per_image.push_back(std::move(m));
    }
    ensure_parent(out_prefix + "_m0.pgm");
    const auto masks = build_msa_mask(layout, fg, first_step);
    for (std::size_t i = 0; i < masks.size(); ++i)
        write_mask_pgm(out_prefix + "_m" + std::to_string(i) + ".pgm", masks[i]);
    return 0;
}

int cmd_selftest(const RunConfig& cfg) {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << "\n";
        if (!ok) ++failures;
    };

    // Shared-attention oracle agreement on random instances.
    {
        Rng rng(cfg.seed);
        bool ok = true;
        for (int inst = 0; inst < 20 && ok; ++inst) {
            const std::size_t N = 1 + rng.next_below(3);
            const TokenLayout layout{N, 1, 2, 2};
            ForegroundMask fg;
            fg.h = 2;
            fg.w = 2;
            for (std::size_t i = 0; i < N; ++i) {
                std::vector<std::uint8_t> m(4);
                for (auto& v : m) v = rng.uniform() < 0.5 ? 1 : 0;
                fg.per_image.push_back(std::move(m));
            }
            AttentionBatch batch;
            batch.heads = 2;
            batch.head_dim = 3;
            for (std::size_t i = 0; i < N; ++i) {
                batch.q.push_back(gaussian_tensor({layout.per_image(), 6}, rng));
                batch.k.push_back(gaussian_tensor({layout.per_image(), 6}, rng));
                batch.v.push_back(gaussian_tensor({layout.per_image(), 6}, rng));
            }
            const auto masks = build_msa_mask(layout, fg, false);
            const PositionGrid grid = rope_grid(layout);
            const auto fast = msa_forward(batch, masks, &grid);
            const auto slow = attention_oracle(batch, masks, &grid);
            for (std::size_t i = 0; i < N; ++i)
                if (frobenius_norm(fast[i] - slow[i]) > 1e-10) ok = false;
        }
        check("attention oracle agreement", ok);
    }

    // Warp identities.
    {
        Rng rng(cfg.seed + 1);
        const Tensor f_src = gaussian_tensor({4, 4, 2}, rng);
        const Tensor f_dst = gaussian_tensor({4, 4, 2}, rng);
        CorrespondenceMap corr;
        corr.height = 4;
        corr.width = 4;
        corr.du.assign(16, 0.0);
        corr.dv.assign(16, 0.0);
        corr.alpha.assign(16, 1);
        corr.valid.assign(16, 1);
        const Tensor warped = warp_features(f_src, f_dst, corr, 1.0);
        bool ok = frobenius_norm(warped - f_src) < 1e-12;
        corr.alpha.assign(16, 0);
        const Tensor kept = warp_features(f_src, f_dst, corr, 1.0);
        ok = ok && frobenius_norm(kept - f_dst) < 1e-12;
        check("warp identities", ok);
    }

    // Round-trip correspondence on one procedural scene.
    {
        const Scene scene = Scene::random(cfg.seed + 2);
        Rng rng(cfg.seed + 2);
        const auto views = select_views(scene, rng, 2, 0.1, 24);
        const auto corr = correspondence_map(views[0], views[1], 0.05 * scene.diameter());
        bool any = false;
        for (std::size_t i = 0; i < corr.alpha.size() && !any; ++i)
            if (corr.valid[i] && corr.alpha[i]) any = true;
        check("correspondence visibility", any && overlap_fraction(corr) >= 0.1);
    }

    // Gradient check on a tiny model, flow mode.
    {
        ModelConfig mc;
        mc.layers = 1;
        mc.width = 8;
        mc.heads = 2;
        mc.grid_h = 2;
        mc.grid_w = 2;
        mc.channels = 2;
        mc.in_channels = 2;
        mc.text_len = 1;
        mc.num_captions = 4;
        DitModel model(mc, cfg.seed + 3);
        const NoiseSchedule sched{NoiseSchedule::Mode::flow, 10};
        Rng rng(cfg.seed + 3);
        TrainSample s;
        s.x = gaussian_tensor({2, 2, 2}, rng);
        s.eps = gaussian_tensor({2, 2, 2}, rng);
        s.caption_id = 1;
        s.t = 5;
        model.zero_grads();
        model.training_loss(s, sched, true);
        bool ok = true;
        const double h = 1e-5;
        for (auto& p : model.parameters()) {
            // Spot-check one entry per parameter.
            double& w = p.value(0, 0);
            const double saved = w;
            w = saved + h;
            const double lp = model.training_loss(s, sched, false);
            w = saved - h;
            const double lm = model.training_loss(s, sched, false);
            w = saved;
            const double fd = (lp - lm) / (2 * h);
            const double an = p.grad(0, 0);
            if (std::abs(fd - an) > 1e-4 * std::max({1.0, std::abs(fd), std::abs(an)}))
                ok = false;
        }
        check("gradient spot check", ok);
    }

    // Guidance algebra and schedule endpoints.
    {
        GuidanceStep gs{Tensor({2}, {0.0, 0.0}), Tensor({2}, {-3.0, -4.0}),
                        Tensor({2}, {0.0, 1.0})};
        const Tensor out = guidance_combine_normalized(gs, 1.0, 1.0);
        const bool algebra = std::abs(out[0] - 0.6) < 1e-12 && std::abs(out[1] - 1.8) < 1e-12;
        GuidanceConfig g;
        g.lambda_i = 8.0;
        g.lambda_i_ramp = 5.0;
        const bool sched_ok = std::abs(guidance_schedule_value(g, 0, 50) - 8.0) < 1e-12 &&
                              std::abs(guidance_schedule_value(g, 49, 50) - 13.0) < 1e-12;
        check("guidance algebra", algebra);
        check("guidance schedule endpoints", sched_ok);
    }

    return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"syncd: consistent image-set generation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file; flags override")
        ->check(CLI::ExistingFile);

    // Flag overrides shared by several subcommands. CLI11 tracks which were
    // actually passed, so config values survive unless overridden.
    std::uint64_t seed = 0;
    std::size_t jobs = 1, steps = 30, num_images = 2;
    double lambda_i = 8.0, lambda_c = 2.5, lambda_i_ramp = 5.0, phi = 0.6;
    double aesthetic_min = 6.0, similarity_min = 0.7, warp_fraction = 0.2;
    std::string gen_path = "deformable", guidance_mode = "normalized", extractor = "toy";
    std::string sched_mode = "flow";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "master RNG seed");
        sub->add_option("--jobs", jobs, "worker threads");
    };

    // gen-set
    auto* gen = app.add_subcommand("gen-set", "generate consistent image sets");
    std::string gen_out = "out/manifest.jsonl";
    std::size_t n_sets = 1;
    std::vector<std::string> gen_prompts;
    add_common(gen);
    gen->add_option("--out", gen_out, "output manifest path");
    gen->add_option("--sets", n_sets, "number of sets");
    gen->add_option("--num-images", num_images, "images per set (N)");
    gen->add_option("--path", gen_path, "rigid|deformable")
        ->check(CLI::IsMember({"rigid", "deformable"}));
    gen->add_option("--steps", steps, "denoising steps");
    gen->add_option("--warp-fraction", warp_fraction, "fraction of steps with warping");
    gen->add_option("--prompt", gen_prompts, "per-image prompt text");

    // filter
    auto* flt = app.add_subcommand("filter", "apply dataset quality filters");
    std::string flt_in, flt_out = "out/filtered.jsonl";
    add_common(flt);
    flt->add_option("--manifest", flt_in, "input manifest")->required();
    flt->add_option("--out", flt_out, "output manifest");
    flt->add_option("--aesthetic-min", aesthetic_min, "minimum aesthetic score");
    flt->add_option("--similarity-min", similarity_min, "minimum pairwise similarity");
    flt->add_option("--extractor", extractor, "toy or cmd:<path>");

    // train
    auto* trn = app.add_subcommand("train", "train the toy denoiser");
    std::string trn_out = "out/model.ckpt";
    std::size_t trn_steps = 200, batch = 4, num_refs = 0;
    add_common(trn);
    trn->add_option("--steps", trn_steps, "optimizer steps");
    trn->add_option("--batch", batch, "batch size");
    trn->add_option("--refs", num_refs, "references per sample (K)");
    trn->add_option("--out", trn_out, "checkpoint path");
    trn->add_option("--mode", sched_mode, "flow|diffusion")
        ->check(CLI::IsMember({"flow", "diffusion"}));

    // sample
    auto* smp = app.add_subcommand("sample", "sample with dual guidance");
    std::string smp_ckpt, smp_out = "out/sample.sycd";
    std::vector<std::string> ref_paths;
    int caption_id = -1;
    bool png = false;
    add_common(smp);
    smp->add_option("--checkpoint", smp_ckpt, "trained checkpoint (default: fresh model)");
    smp->add_option("--steps", steps, "sampling steps");
    smp->add_option("--mode", guidance_mode, "normalized|vanilla|rescale")
        ->check(CLI::IsMember({"normalized", "vanilla", "rescale"}));
    smp->add_option("--lambda-i", lambda_i, "image guidance scale");
    smp->add_option("--lambda-c", lambda_c, "text guidance scale");
    smp->add_option("--lambda-i-ramp", lambda_i_ramp, "linear lambda-i increase");
    smp->add_option("--phi", phi, "rescale blend factor");
    smp->add_option("--refs", ref_paths, "reference tensor files");
    smp->add_option("--caption", caption_id, "caption id (-1 = unconditional)");
    smp->add_option("--out", smp_out, "output tensor path");
    smp->add_flag("--png", png, "also write a PNG preview");

    // eval
    auto* evl = app.add_subcommand("eval", "combine scores / measure similarity");
    std::string scores_in, scores_out = "out/scores.csv", eval_manifest;
    add_common(evl);
    evl->add_option("--scores", scores_in, "input CSV of sample_id,text_score,image_score");
    evl->add_option("--out", scores_out, "output CSV");
    evl->add_option("--manifest", eval_manifest, "manifest for intra-cluster similarity");
    evl->add_option("--extractor", extractor, "toy or cmd:<path>");

    // dump-mask (debug)
    auto* dmp = app.add_subcommand("dump-mask", "write attention bias visualizations");
    std::string dump_prefix = "out/mask";
    bool first_step = false;
    add_common(dmp);
    dmp->add_option("--num-images", num_images, "images in the set");
    dmp->add_option("--out", dump_prefix, "output file prefix");
    dmp->add_flag("--first-step", first_step, "relaxed first-step mask");

    auto* slf = app.add_subcommand("selftest", "run the built-in oracle suites");
    add_common(slf);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg = load_config(config_path);
        auto override_if = [&](CLI::App* sub, const std::string& flag, auto& field,
                               const auto& value) {
            if (sub->count(flag) > 0) field = value;
        };
        for (CLI::App* sub : {gen, flt, trn, smp, evl, dmp, slf}) {
            if (!sub->parsed()) continue;
            if (sub->count("--seed")) cfg.seed = seed;
            if (sub->count("--jobs")) cfg.jobs = jobs;
        }
        override_if(gen, "--num-images", cfg.num_images, num_images);
        override_if(gen, "--path", cfg.gen_path, gen_path);
        override_if(gen, "--steps", cfg.steps, steps);
        override_if(gen, "--warp-fraction", cfg.warp_fraction, warp_fraction);
        override_if(flt, "--aesthetic-min", cfg.aesthetic_min, aesthetic_min);
        override_if(flt, "--similarity-min", cfg.similarity_min, similarity_min);
        override_if(flt, "--extractor", cfg.extractor, extractor);
        override_if(trn, "--mode", cfg.schedule_mode, sched_mode);
        override_if(smp, "--steps", cfg.steps, steps);
        override_if(smp, "--mode", cfg.guidance_mode, guidance_mode);
        override_if(smp, "--lambda-i", cfg.lambda_i, lambda_i);
        override_if(smp, "--lambda-c", cfg.lambda_c, lambda_c);
        override_if(smp, "--lambda-i-ramp", cfg.lambda_i_ramp, lambda_i_ramp);
        override_if(smp, "--phi", cfg.phi, phi);
        override_if(evl, "--extractor", cfg.extractor, extractor);
        override_if(dmp, "--num-images", cfg.num_images, num_images);

        if (gen->parsed()) return cmd_gen_set(cfg, gen_out, n_sets, gen_prompts);
        if (flt->parsed()) return cmd_filter(cfg, flt_in, flt_out);
        if (trn->parsed()) return cmd_train(cfg, trn_steps, batch, num_refs, trn_out);
        if (smp->parsed()) return cmd_sample(cfg, smp_ckpt, ref_paths, caption_id, smp_out, png);
        if (evl->parsed()) return cmd_eval(cfg, scores_in, scores_out, eval_manifest);
        if (dmp->parsed()) return cmd_dump_mask(cfg, first_step, dump_prefix);
        if (slf->parsed()) return cmd_selftest(cfg);
        std::cerr << "no subcommand given\n";
        return 1;
    } catch (const std::exception& e) {
        log(LogLevel::error, e.what());
        return 2;
    }
}
