#include "syncd/denoiser.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace syncd {

double NoiseSchedule::alpha_at(double s) const {
    return mode == Mode::flow ? 1.0 - s : std::cos(std::numbers::pi / 2.0 * s);
}
double NoiseSchedule::sigma_at(double s) const {
    return mode == Mode::flow ? s : std::sin(std::numbers::pi / 2.0 * s);
}
void NoiseSchedule::check_t(std::size_t t) const {
    if (t > steps) throw RangeError("timestep " + std::to_string(t) + " out of [0, " +
                                    std::to_string(steps) + "]");
}
double NoiseSchedule::alpha(std::size_t t) const {
    check_t(t);
    return alpha_at(static_cast<double>(t) / static_cast<double>(steps));
}
double NoiseSchedule::sigma(std::size_t t) const {
    check_t(t);
    return sigma_at(static_cast<double>(t) / static_cast<double>(steps));
}

Tensor noise_sample(const Tensor& x, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
    if (!x.same_shape(eps)) throw ShapeError("noise_sample: x/eps shape mismatch");
    return sched.alpha(t) * x + sched.sigma(t) * eps;
}

Tensor regression_target(const Tensor& x, const Tensor& eps, std::size_t t,
                         const NoiseSchedule& sched) {
    if (!x.same_shape(eps)) throw ShapeError("regression_target: x/eps shape mismatch");
    if (sched.mode == NoiseSchedule::Mode::flow) {
        sched.check_t(t);
        return eps - x;
    }
    return sched.alpha(t) * eps - sched.sigma(t) * x;
}

void ModelConfig::validate() const {
    if (width == 0 || heads == 0 || width % heads != 0)
        throw ShapeError("model width must be a positive multiple of heads");
    if (layers == 0 || grid_h == 0 || grid_w == 0 || channels == 0 || in_channels < channels)
        throw ShapeError("invalid model config");
}

namespace {
Eigen::MatrixXd init_matrix(Rng& rng, std::size_t rows, std::size_t cols, double std_dev) {
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std_dev * rng.normal();
    return m;
}

// Image latent [H x W x C] -> token matrix [HW x C].
Eigen::MatrixXd tokens_of(const Tensor& img, std::size_t hw, std::size_t ch) {
    if (img.rank() != 3 || img.dim(0) * img.dim(1) != hw || img.dim(2) != ch)
        throw ShapeError("latent grid mismatch: got " + img.shape_str());
    Eigen::MatrixXd m(hw, ch);
    for (std::size_t i = 0; i < hw; ++i)
        for (std::size_t c = 0; c < ch; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = img[i * ch + c];
    return m;
}

Eigen::MatrixXd time_features(double t_norm, std::size_t width) {
    Eigen::MatrixXd f(1, static_cast<Eigen::Index>(width));
    f.setZero();
    const std::size_t half = width / 2;
    const double ts = t_norm * 1000.0;
    for (std::size_t k = 0; k < half; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(half));
        f(0, static_cast<Eigen::Index>(2 * k)) = std::sin(ts * freq);
        f(0, static_cast<Eigen::Index>(2 * k + 1)) = std::cos(ts * freq);
    }
    return f;
}
}  // namespace

DitModel::DitModel(ModelConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {
    config_.validate();
    Rng rng(seed);
    const std::size_t w = config_.width;
    auto add = [&](const std::string& name, Eigen::MatrixXd value) {
        index_[name] = params_.size();
        params_.emplace_back(name, std::move(value));
    };
    const double inv_w = 1.0 / std::sqrt(static_cast<double>(w));
    add("patch_in.w", init_matrix(rng, config_.in_channels, w,
                                  1.0 / std::sqrt(static_cast<double>(config_.in_channels))));
    add("patch_in.b", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(w)));
    add("time.w", init_matrix(rng, w, w, inv_w));
    add("time.b", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(w)));
    add("caption.table", init_matrix(rng, (config_.num_captions + 1) * config_.text_len, w, 0.5));
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        add(p + "ln1.g", Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(w)));
        add(p + "ln1.b", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(w)));
        for (const char* m : {"wq", "wk", "wv", "wo"}) add(p + m, init_matrix(rng, w, w, inv_w));
        for (const char* m : {"bq", "bk", "bv", "bo"})
            add(p + m, Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(w)));
        add(p + "ln2.g", Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(w)));
        add(p + "ln2.b", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(w)));
        add(p + "mlp.w1", init_matrix(rng, w, 2 * w, inv_w));
        add(p + "mlp.b1", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(2 * w)));
        add(p + "mlp.w2", init_matrix(rng, 2 * w, w, 1.0 / std::sqrt(2.0 * static_cast<double>(w))));
        add(p + "mlp.b2", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(w)));
    }
    add("final.ln.g", Eigen::MatrixXd::Ones(1, static_cast<Eigen::Index>(w)));
    add("final.ln.b", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(w)));
    add("out.w", init_matrix(rng, w, config_.channels, inv_w));
    add("out.b", Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(config_.channels)));
}

Parameter* DitModel::find(const std::string& name) {
    return &params_[index_.at(name)];
}
const Parameter* DitModel::find(const std::string& name) const {
    return &params_[index_.at(name)];
}

void DitModel::zero_grads() {
    for (Parameter& p : params_) p.zero_grad();
}

DitModel::PlanOutput DitModel::run_plan(Graph& g, const std::vector<StreamSpec>& streams,
                                        const Eigen::MatrixXd& joint_bias,
                                        const std::vector<TokenPosition>& positions, double t_norm,
                                        std::vector<Tensor>* cross_attn) const {
    auto* self = const_cast<DitModel*>(this);
    const std::size_t w = config_.width;
    const std::size_t hw = config_.image_tokens();

    Graph::Ref patch_w = g.param(self->find("patch_in.w"));
    Graph::Ref patch_b = g.param(self->find("patch_in.b"));
    Graph::Ref cap_table = g.param(self->find("caption.table"));

    // Time conditioning row, shared by all time-bearing streams.
    Graph::Ref time_row = g.add_row(
        g.matmul(g.constant(time_features(t_norm, w)), g.param(self->find("time.w"))),
        g.param(self->find("time.b")));

    std::vector<Graph::Ref> embedded;
    std::vector<std::size_t> starts, text_lens, img_lens;
    std::size_t offset = 0;
    for (const StreamSpec& s : streams) {
        std::vector<Graph::Ref> parts;
        std::size_t tl = 0;
        if (s.has_text) {
            tl = config_.text_len;
            const std::size_t cap =
                s.caption_id >= 0 ? static_cast<std::size_t>(s.caption_id) : config_.num_captions;
            if (cap > config_.num_captions) throw RangeError("caption id out of range");
            parts.push_back(g.slice_rows(cap_table, cap * config_.text_len, config_.text_len));
        }
        Graph::Ref img = g.add_row(
            g.matmul(g.constant(tokens_of(s.tokens, hw, config_.in_channels)), patch_w), patch_b);
        if (s.add_time) img = g.add(img, g.concat_rows(std::vector<Graph::Ref>(hw, time_row)));
        parts.push_back(img);
        embedded.push_back(parts.size() == 1 ? parts[0] : g.concat_rows(parts));
        starts.push_back(offset);
        text_lens.push_back(tl);
        img_lens.push_back(hw);
        offset += tl + hw;
    }

    Graph::Ref x = embedded.size() == 1 ? embedded[0] : g.concat_rows(embedded);

    std::vector<Eigen::MatrixXd> probs;
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l) + ".";
        Graph::Ref h = g.layer_norm(x, g.param(self->find(p + "ln1.g")),
                                    g.param(self->find(p + "ln1.b")));
        Graph::Ref q = g.add_row(g.matmul(h, g.param(self->find(p + "wq"))),
                                 g.param(self->find(p + "bq")));
        Graph::Ref k = g.add_row(g.matmul(h, g.param(self->find(p + "wk"))),
                                 g.param(self->find(p + "bk")));
        Graph::Ref v = g.add_row(g.matmul(h, g.param(self->find(p + "wv"))),
                                 g.param(self->find(p + "bv")));
        const bool capture = cross_attn && l + 1 == config_.layers;
        Graph::Ref att = g.attention(q, k, v, joint_bias, positions, config_.heads,
                                     config_.head_dim(), nullptr, capture ? &probs : nullptr);
        Graph::Ref proj = g.add_row(g.matmul(att, g.param(self->find(p + "wo"))),
                                    g.param(self->find(p + "bo")));
        x = g.add(x, proj);
        Graph::Ref h2 = g.layer_norm(x, g.param(self->find(p + "ln2.g")),
                                     g.param(self->find(p + "ln2.b")));
        Graph::Ref m1 = g.gelu(g.add_row(g.matmul(h2, g.param(self->find(p + "mlp.w1"))),
                                         g.param(self->find(p + "mlp.b1"))));
        Graph::Ref m2 = g.add_row(g.matmul(m1, g.param(self->find(p + "mlp.w2"))),
                                  g.param(self->find(p + "mlp.b2")));
        x = g.add(x, m2);
    }
    Graph::Ref fin = g.layer_norm(x, g.param(self->find("final.ln.g")),
                                  g.param(self->find("final.ln.b")));
    Graph::Ref out = g.add_row(g.matmul(fin, g.param(self->find("out.w"))),
                               g.param(self->find("out.b")));

    if (cross_attn) {
        // Average over heads happens downstream; report raw per-head attention
        // from each stream's image-token queries to its own text tokens.
        cross_attn->clear();
        for (std::size_t s = 0; s < streams.size(); ++s) {
            if (text_lens[s] == 0) continue;
            Tensor att({config_.heads, text_lens[s], img_lens[s]});
            for (std::size_t h = 0; h < config_.heads; ++h) {
                const Eigen::MatrixXd& p = probs[h];
                for (std::size_t tt = 0; tt < text_lens[s]; ++tt) {
                    for (std::size_t i = 0; i < img_lens[s]; ++i) {
                        att.at({h, tt, i}) =
                            p(static_cast<Eigen::Index>(starts[s] + text_lens[s] + i),
                              static_cast<Eigen::Index>(starts[s] + tt));
                    }
                }
            }
            cross_attn->push_back(std::move(att));
        }
    }

    PlanOutput po;
    for (std::size_t s = 0; s < streams.size(); ++s) {
        po.image_outputs.push_back(g.slice_rows(out, starts[s] + text_lens[s], img_lens[s]));
    }
    return po;
}

namespace {
Tensor to_latent(const Eigen::MatrixXd& tokens, std::size_t h, std::size_t w) {
    Tensor out({h, w, static_cast<std::size_t>(tokens.cols())});
    for (std::size_t i = 0; i < h * w; ++i)
        for (Eigen::Index c = 0; c < tokens.cols(); ++c)
            out[i * static_cast<std::size_t>(tokens.cols()) + static_cast<std::size_t>(c)] =
                tokens(static_cast<Eigen::Index>(i), c);
    return out;
}
}  // namespace

Tensor DitModel::forward(const Tensor& x_t, std::size_t t, const NoiseSchedule& sched,
                         int caption_id, const std::vector<Tensor>& refs,
                         const std::vector<Tensor>& ref_eps,
                         const std::vector<std::size_t>* ref_bands) const {
    const std::size_t K = refs.size();
    if (ref_bands && ref_bands->size() != K)
        throw ShapeError("ref_bands size does not match reference count");

    std::vector<StreamSpec> streams;
    streams.push_back({x_t, caption_id, true, true, 0});
    for (std::size_t i = 0; i < K; ++i) {
        Tensor ref_in = refs[i];
        if (config_.ref_mode == RefMode::noisy) {
            if (ref_eps.size() != K)
                throw ShapeError("reference-noisy mode needs one eps per reference");
            ref_in = noise_sample(refs[i], t, ref_eps[i], sched);
        }
        streams.push_back({std::move(ref_in), -1, false, false,
                           ref_bands ? (*ref_bands)[i] : i + 1});
    }

    const std::size_t hw = config_.image_tokens();
    const std::size_t n0 = config_.text_len + hw;
    const std::size_t total = n0 + K * hw;

    // Target rows attend to everything; reference i attends only to itself.
    Eigen::MatrixXd bias = Eigen::MatrixXd::Constant(
        static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total), kBlockedSentinel);
    bias.topRows(static_cast<Eigen::Index>(n0)).setZero();
    for (std::size_t i = 0; i < K; ++i) {
        const auto o = static_cast<Eigen::Index>(n0 + i * hw);
        bias.block(o, o, static_cast<Eigen::Index>(hw), static_cast<Eigen::Index>(hw)).setZero();
    }

    std::vector<TokenPosition> positions(total);
    for (std::size_t tt = 0; tt < config_.text_len; ++tt) positions[tt] = {0.0, 0.0, false};
    auto fill_band = [&](std::size_t first, std::size_t band) {
        for (std::size_t r = 0; r < config_.grid_h; ++r)
            for (std::size_t c = 0; c < config_.grid_w; ++c)
                positions[first + r * config_.grid_w + c] = {
                    static_cast<double>(band * config_.grid_h + r), static_cast<double>(c), true};
    };
    fill_band(config_.text_len, 0);
    for (std::size_t i = 0; i < K; ++i) fill_band(n0 + i * hw, streams[i + 1].band);

    Graph g;
    PlanOutput po = run_plan(g, streams, bias, positions,
                             static_cast<double>(t) / static_cast<double>(sched.steps), nullptr);
    return to_latent(g.value(po.image_outputs[0]), config_.grid_h, config_.grid_w);
}

std::vector<Tensor> DitModel::forward_msa(const std::vector<Tensor>& x_ts, std::size_t t,
                                          const NoiseSchedule& sched,
                                          const std::vector<int>& caption_ids,
                                          const std::vector<Tensor>& masks,
                                          std::vector<Tensor>* cross_attn) const {
    const std::size_t N = x_ts.size();
    if (caption_ids.size() != N || masks.size() != N)
        throw ShapeError("forward_msa: per-image inputs disagree");
    const std::size_t n = config_.seq_len();

    std::vector<StreamSpec> streams;
    for (std::size_t i = 0; i < N; ++i) streams.push_back({x_ts[i], caption_ids[i], true, true, i});

    Eigen::MatrixXd bias(static_cast<Eigen::Index>(N * n), static_cast<Eigen::Index>(N * n));
    for (std::size_t i = 0; i < N; ++i) {
        if (masks[i].rank() != 2 || masks[i].dim(0) != n || masks[i].dim(1) != N * n)
            throw ShapeError("forward_msa: bias matrix shape mismatch");
        bias.middleRows(static_cast<Eigen::Index>(i * n), static_cast<Eigen::Index>(n)) =
            masks[i].mat();
    }

    TokenLayout layout{N, config_.text_len, config_.grid_h, config_.grid_w};
    const PositionGrid grid = rope_grid(layout);

    Graph g;
    PlanOutput po = run_plan(g, streams, bias, grid.positions,
                             static_cast<double>(t) / static_cast<double>(sched.steps), cross_attn);
    std::vector<Tensor> out;
    out.reserve(N);
    for (std::size_t i = 0; i < N; ++i)
        out.push_back(to_latent(g.value(po.image_outputs[i]), config_.grid_h, config_.grid_w));
    return out;
}

double DitModel::training_loss(const TrainSample& sample, const NoiseSchedule& sched,
                               bool accumulate_grads) {
    const Tensor x_t = noise_sample(sample.x, sample.t, sample.eps, sched);
    const Tensor target = regression_target(sample.x, sample.eps, sample.t, sched);

    // Inline forward so the graph stays alive for backward.
    const std::size_t K = sample.refs.size();
    std::vector<StreamSpec> streams;
    streams.push_back({x_t, sample.caption_id, true, true, 0});
    for (std::size_t i = 0; i < K; ++i) {
        Tensor ref_in = sample.refs[i];
        if (config_.ref_mode == RefMode::noisy) {
            if (sample.ref_eps.size() != K)
                throw ShapeError("reference-noisy mode needs one eps per reference");
            ref_in = noise_sample(sample.refs[i], sample.t, sample.ref_eps[i], sched);
        }
        streams.push_back({std::move(ref_in), -1, false, false, i + 1});
    }
    const std::size_t hw = config_.image_tokens();
    const std::size_t n0 = config_.text_len + hw;
    const std::size_t total = n0 + K * hw;
    Eigen::MatrixXd bias = Eigen::MatrixXd::Constant(
        static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(total), kBlockedSentinel);
    bias.topRows(static_cast<Eigen::Index>(n0)).setZero();
    for (std::size_t i = 0; i < K; ++i) {
        const auto o = static_cast<Eigen::Index>(n0 + i * hw);
        bias.block(o, o, static_cast<Eigen::Index>(hw), static_cast<Eigen::Index>(hw)).setZero();
    }
    std::vector<TokenPosition> positions(total);
    for (std::size_t tt = 0; tt < config_.text_len; ++tt) positions[tt] = {0.0, 0.0, false};
    auto fill_band = [&](std::size_t first, std::size_t band) {
        for (std::size_t r = 0; r < config_.grid_h; ++r)
            for (std::size_t c = 0; c < config_.grid_w; ++c)
                positions[first + r * config_.grid_w + c] = {
                    static_cast<double>(band * config_.grid_h + r), static_cast<double>(c), true};
    };
    fill_band(config_.text_len, 0);
    for (std::size_t i = 0; i < K; ++i) fill_band(n0 + i * hw, i + 1);

    Graph g;
    PlanOutput po = run_plan(g, streams, bias, positions,
                             static_cast<double>(sample.t) / static_cast<double>(sched.steps),
                             nullptr);
    Graph::Ref loss = g.mse(po.image_outputs[0],
                            tokens_of(target, hw, config_.channels));
    const double loss_value = g.value(loss)(0, 0);
    if (accumulate_grads) g.backward(loss);
    return loss_value;
}

double train_step(DitModel& model, const std::vector<TrainSample>& batch,
                  const NoiseSchedule& sched, AdamState& opt) {
    if (batch.empty()) throw RangeError("train_step: empty batch");
    auto& params = model.parameters();
    if (opt.m.empty()) {
        for (const Parameter& p : params) {
            opt.m.emplace_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
            opt.v.emplace_back(Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols()));
        }
    }
    model.zero_grads();
    double loss = 0.0;
    for (const TrainSample& s : batch) loss += model.training_loss(s, sched, true);
    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss))
        throw DivergenceError("training loss is not finite at step " + std::to_string(opt.step));

    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Eigen::MatrixXd grad = params[i].grad / static_cast<double>(batch.size());
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * grad;
        opt.v[i] = opt.beta2 * opt.v[i].array().matrix() +
                   (1.0 - opt.beta2) * grad.array().square().matrix();
        const Eigen::ArrayXXd mhat = opt.m[i].array() / bc1;
        const Eigen::ArrayXXd vhat = opt.v[i].array() / bc2;
        params[i].value -= (opt.lr * mhat / (vhat.sqrt() + opt.eps)).matrix();
    }
    return loss;
}

void apply_cfg_dropout(TrainSample& sample, Rng& rng) {
    const double u = rng.uniform();
    const bool drop_both = u < 0.05;
    const bool drop_refs = drop_both || (u >= 0.05 && u < 0.15);
    const bool drop_caption = drop_both || (u >= 0.15 && u < 0.25);
    if (drop_refs) {
        sample.refs.clear();
        sample.ref_eps.clear();
    }
    if (drop_caption) sample.caption_id = -1;
}

void save_checkpoint(const std::filesystem::path& path, const DitModel& model,
                     std::size_t step_count) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint for write: " + path.string());
    const ModelConfig& c = model.config();
    f << "syncd-checkpoint v1\n"
      << "layers " << c.layers << "\nwidth " << c.width << "\nheads " << c.heads << "\ngrid "
      << c.grid_h << " " << c.grid_w << "\nchannels " << c.channels << "\nin_channels "
      << c.in_channels << "\ntext_len " << c.text_len << "\nnum_captions " << c.num_captions
      << "\nref_mode " << (c.ref_mode == RefMode::noisy ? "noisy" : "clean") << "\nseed "
      << model.seed() << "\nsteps " << step_count << "\nparams " << model.parameters().size()
      << "\n";
    for (const Parameter& p : model.parameters()) {
        f << p.name << "\n";
        Tensor t({static_cast<std::size_t>(p.value.rows()), static_cast<std::size_t>(p.value.cols())});
        t.mat() = p.value;
        write_tensor(f, t);
        f << "\n";
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path.string());
    std::string line;
    std::getline(f, line);
    if (line != "syncd-checkpoint v1") throw IoError("bad checkpoint header");
    Checkpoint ck;
    std::string key, mode;
    std::size_t n_params = 0;
    ModelConfig& c = ck.config;
    for (int i = 0; i < 12; ++i) {
        f >> key;
        if (key == "layers") f >> c.layers;
        else if (key == "width") f >> c.width;
        else if (key == "heads") f >> c.heads;
        else if (key == "grid") f >> c.grid_h >> c.grid_w;
        else if (key == "channels") f >> c.channels;
        else if (key == "in_channels") f >> c.in_channels;
        else if (key == "text_len") f >> c.text_len;
        else if (key == "num_captions") f >> c.num_captions;
        else if (key == "ref_mode") { f >> mode; c.ref_mode = mode == "clean" ? RefMode::clean : RefMode::noisy; }
        else if (key == "seed") f >> ck.seed;
        else if (key == "steps") f >> ck.step_count;
        else if (key == "params") f >> n_params;
        else throw IoError("unknown checkpoint key: " + key);
    }
    f.ignore(1);
    ck.model = std::make_unique<DitModel>(c, ck.seed);
    if (ck.model->parameters().size() != n_params)
        throw IoError("checkpoint parameter count mismatch");
    for (Parameter& p : ck.model->parameters()) {
        std::getline(f, line);
        if (line != p.name) throw IoError("checkpoint parameter order mismatch at " + p.name);
        Tensor t = read_tensor(f);
        if (t.dim(0) != static_cast<std::size_t>(p.value.rows()) ||
            t.dim(1) != static_cast<std::size_t>(p.value.cols()))
            throw IoError("checkpoint tensor shape mismatch at " + p.name);
        p.value = t.mat();
        f.ignore(1);
    }
    return ck;
}

}  // namespace syncd
