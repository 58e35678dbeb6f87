#include "diffkpt/pipeline.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"
#include "diffkpt/serialize.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace diffkpt {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (T < 1) throw ConfigError("T must be at least 1");
    if (sigma <= 0.0) throw ConfigError("sigma must be positive");
    if (lr_decay_factor <= 0.0 || lr_decay_factor > 1.0) {
        throw ConfigError("lr_decay_factor must be in (0,1]");
    }
    for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
        if (lr_decay_epochs[i] < 1 || lr_decay_epochs[i] >= epochs) {
            throw ConfigError("lr decay epochs must lie strictly inside 1..epochs");
        }
        if (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1]) {
            throw ConfigError("lr decay epochs must be strictly increasing");
        }
    }
    if (loss_target != "x0" && loss_target != "eps") {
        throw ConfigError("loss_target must be x0 or eps");
    }
    if (infer_mode != "literal" && infer_mode != "ddim") {
        throw ConfigError("infer_mode must be literal or ddim");
    }
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1");
    }
    if (vis_threshold < 0.0 || vis_threshold > 1.0) {
        throw ConfigError("vis_threshold must be in [0,1]");
    }
}

namespace {

std::vector<std::string> split_csv_field(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

double parse_real(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' needs a real number, got '" + v + "'");
    }
}

long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' needs an integer, got '" + v + "'");
    }
}

} // namespace

TrainConfig parse_train_config(const std::string& text) {
    TrainConfig cfg;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" +
                              t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string val = trim(t.substr(eq + 1));
        if (key == "channels") cfg.channels = std::size_t(parse_int(key, val));
        else if (key == "prior_d") cfg.prior_d = std::size_t(parse_int(key, val));
        else if (key == "heads") cfg.heads = std::size_t(parse_int(key, val));
        else if (key == "sigma") cfg.sigma = parse_real(key, val);
        else if (key == "vis_threshold") cfg.vis_threshold = parse_real(key, val);
        else if (key == "T") cfg.T = int(parse_int(key, val));
        else if (key == "beta_start") cfg.beta_start = parse_real(key, val);
        else if (key == "beta_end") cfg.beta_end = parse_real(key, val);
        else if (key == "loss_target") cfg.loss_target = val;
        else if (key == "mask_loss") {
            if (val != "true" && val != "false") {
                throw ConfigError("config key 'mask_loss' needs true or false");
            }
            cfg.mask_loss = val == "true";
        } else if (key == "epochs") cfg.epochs = int(parse_int(key, val));
        else if (key == "batch_size") cfg.batch_size = std::size_t(parse_int(key, val));
        else if (key == "lr") cfg.lr = parse_real(key, val);
        else if (key == "weight_decay") cfg.weight_decay = parse_real(key, val);
        else if (key == "lr_decay_factor") cfg.lr_decay_factor = parse_real(key, val);
        else if (key == "lr_decay_epochs") {
            cfg.lr_decay_epochs.clear();
            if (!val.empty()) {
                for (const auto& part : split_csv_field(val)) {
                    cfg.lr_decay_epochs.push_back(int(parse_int(key, trim(part))));
                }
            }
        } else if (key == "infer_mode") cfg.infer_mode = val;
        else if (key == "seed") cfg.seed = std::uint64_t(parse_int(key, val));
        else throw ConfigError("unknown config key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "channels=" << cfg.channels << '\n';
    os << "prior_d=" << cfg.prior_d << '\n';
    os << "heads=" << cfg.heads << '\n';
    os << "sigma=" << fmt_double(cfg.sigma) << '\n';
    os << "vis_threshold=" << fmt_double(cfg.vis_threshold) << '\n';
    os << "T=" << cfg.T << '\n';
    os << "beta_start=" << fmt_double(cfg.beta_start) << '\n';
    os << "beta_end=" << fmt_double(cfg.beta_end) << '\n';
    os << "loss_target=" << cfg.loss_target << '\n';
    os << "mask_loss=" << (cfg.mask_loss ? "true" : "false") << '\n';
    os << "epochs=" << cfg.epochs << '\n';
    os << "batch_size=" << cfg.batch_size << '\n';
    os << "lr=" << fmt_double(cfg.lr) << '\n';
    os << "weight_decay=" << fmt_double(cfg.weight_decay) << '\n';
    os << "lr_decay_factor=" << fmt_double(cfg.lr_decay_factor) << '\n';
    os << "lr_decay_epochs=";
    for (std::size_t i = 0; i < cfg.lr_decay_epochs.size(); ++i) {
        if (i) os << ',';
        os << cfg.lr_decay_epochs[i];
    }
    os << '\n';
    os << "infer_mode=" << cfg.infer_mode << '\n';
    os << "seed=" << cfg.seed << '\n';
    return os.str();
}

ModelConfig model_config_for(const TrainConfig& cfg, std::size_t n_keypoints,
                             std::size_t img_h, std::size_t img_w) {
    ModelConfig m;
    m.channels = cfg.channels;
    m.prior_d = cfg.prior_d;
    m.heads = cfg.heads;
    m.n_keypoints = n_keypoints;
    m.T = cfg.T;
    m.img_h = img_h;
    m.img_w = img_w;
    m.validate();
    return m;
}

double effective_lr(const TrainConfig& cfg, int epoch) {
    double lr = cfg.lr;
    for (int boundary : cfg.lr_decay_epochs) {
        if (epoch >= boundary) lr *= cfg.lr_decay_factor;
    }
    return lr;
}

void AdamW::init(const DenoiserParams& params) {
    m.clear();
    v.clear();
    step = 0;
    for (const auto& [name, t] : params.named()) {
        m.emplace_back(t.size(), 0.0);
        v.emplace_back(t.size(), 0.0);
    }
}

void AdamW::update(DenoiserParams& params, double lr, double weight_decay) {
    auto named = params.named();
    if (named.size() != m.size()) throw ContractError("optimizer state does not mirror params");
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, double(step));
    const double bc2 = 1.0 - std::pow(beta2, double(step));
    for (std::size_t p = 0; p < named.size(); ++p) {
        Tensor& t = named[p].second;
        const bool has_grad = t.has_grad();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double g = has_grad ? t.node()->grad[i] : 0.0;
            m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * g;
            v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * g * g;
            const double mhat = m[p][i] / bc1;
            const double vhat = v[p][i] / bc2;
            t[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * t[i]);
        }
    }
}

namespace {

Tensor visibility_mask(const KeypointSet& kps, std::size_t h, std::size_t w) {
    Tensor mask = Tensor::zeros({kps.count(), h, w});
    for (std::size_t i = 0; i < kps.count(); ++i) {
        if (kps.visibility[i] <= 0) continue;
        double* p = mask.data() + i * h * w;
        std::fill(p, p + h * w, 1.0);
    }
    return mask;
}

std::size_t labeled_count(const KeypointSet& kps) {
    std::size_t n = 0;
    for (int v : kps.visibility) n += v > 0 ? 1 : 0;
    return n;
}

} // namespace

double train_step(const Dataset& ds, const std::vector<std::size_t>& batch,
                  DenoiserParams& params, AdamW& opt, const DiffusionSchedule& sched,
                  const SemanticPrior& prior, const TrainConfig& tcfg, const ModelConfig& mcfg,
                  double lr, Rng& rng) {
    if (batch.empty()) throw ContractError("train_step: empty batch");
    const std::size_t hh = mcfg.map_h(), ww = mcfg.map_w();
    Tape tape;
    Tensor total;
    std::vector<int> sampled_t;
    sampled_t.reserve(batch.size());
    {
        TapeScope scope(tape);
        for (std::size_t idx : batch) {
            if (idx >= ds.size()) throw ContractError("train_step: batch index out of range");
            const int t = int(rng.uniform_int(1, tcfg.T));
            sampled_t.push_back(t);
            HeatmapStack y0 =
                encode(ds.kps[idx], hh, ww, mcfg.stride, tcfg.sigma).stack;
            Tensor eps = Tensor::zeros(y0.values.shape());
            for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
            HeatmapStack y_t = forward_sample(y0, t, eps, sched);

            HeatmapStack out = denoise(y_t, ds.images[idx], prior, t, params, mcfg);
            const Tensor& target = tcfg.loss_target == "x0" ? y0.values : eps;
            Tensor diff = sub(out.values, target);
            double denom = double(mcfg.n_keypoints * hh * ww);
            if (tcfg.mask_loss) {
                diff = mul(diff, visibility_mask(ds.kps[idx], hh, ww));
                denom = double(std::max<std::size_t>(1, labeled_count(ds.kps[idx])) * hh * ww);
            }
            Tensor sample_loss = scale(sum(mul(diff, diff)), 1.0 / denom);
            total = total.defined() ? add(total, sample_loss) : sample_loss;
        }
        total = scale(total, 1.0 / double(batch.size()));
    }
    const double loss = total[0];
    backward(total, tape);
    double max_grad = 0.0;
    for (const auto& [name, t] : params.named()) {
        if (!t.has_grad()) continue;
        for (double g : t.node()->grad) max_grad = std::max(max_grad, std::abs(g));
    }
    if (!std::isfinite(loss) || !std::isfinite(max_grad)) {
        std::ostringstream os;
        os << "non-finite loss " << loss << " (max |grad| " << max_grad << ", timesteps";
        for (int t : sampled_t) os << ' ' << t;
        os << ")";
        throw NumericError(os.str());
    }
    opt.update(params, lr, tcfg.weight_decay);
    for (auto& [name, t] : params.named()) t.zero_grad();
    return loss;
}

KeypointSet infer_one(const Tensor& image, const DenoiserParams& params,
                      const DiffusionSchedule& sched, const SemanticPrior& prior,
                      const ModelConfig& mcfg, Rng& rng, const InferOptions& opts) {
    if (opts.mode != "literal" && opts.mode != "ddim") {
        throw ConfigError("inference mode must be literal or ddim, got '" + opts.mode + "'");
    }
    if (opts.loss_target != "x0" && opts.loss_target != "eps") {
        throw ConfigError("loss_target must be x0 or eps");
    }
    check_prior_count(prior, mcfg.n_keypoints);
    Tensor F = encode_image(image, params, mcfg);
    Tensor F_fuse = fuse_condition(F, prior.F_g);

    HeatmapStack y;
    y.stride = mcfg.stride;
    y.values = Tensor::zeros({mcfg.n_keypoints, mcfg.map_h(), mcfg.map_w()});
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] = rng.normal();

    for (int t = sched.T; t >= 1; --t) {
        HeatmapStack out =
            denoise_with_features(y, F, F_fuse, prior.F_l, t, params, mcfg);
        HeatmapStack y0_hat;
        if (opts.loss_target == "eps") {
            const double ab = sched.abar(t);
            y0_hat.stride = y.stride;
            y0_hat.values = Tensor::zeros(y.values.shape());
            const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
            for (std::size_t i = 0; i < y.values.size(); ++i) {
                y0_hat.values[i] = (y.values[i] - b * out.values[i]) / a;
            }
        } else {
            y0_hat = out;
        }
        y = opts.mode == "literal" ? y0_hat : ddim_step(y, y0_hat, t, sched);
    }
    DecodeOptions dopts;
    dopts.vis_threshold = opts.vis_threshold;
    return decode(y, dopts);
}

namespace {

nlohmann::ordered_json config_as_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    std::istringstream is(serialize_train_config(cfg));
    std::string line;
    while (std::getline(is, line)) {
        const std::size_t eq = line.find('=');
        j[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
    std::ostringstream os;
    for (auto it = j.begin(); it != j.end(); ++it) {
        os << it.key() << '=' << it.value().get<std::string>() << '\n';
    }
    return parse_train_config(os.str());
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    nlohmann::ordered_json header;
    header["format"] = "dpkpt-checkpoint";
    header["version"] = 1;
    header["config"] = config_as_json(ck.cfg);
    header["model"] = {{"n_keypoints", ck.mcfg.n_keypoints},
                       {"img_h", ck.mcfg.img_h},
                       {"img_w", ck.mcfg.img_w}};
    header["epoch"] = ck.epoch;
    header["step"] = ck.global_step;
    header["opt_step"] = ck.opt.step;
    header["rng_state"] = {{"seed", ck.rng_seed},
                           {"stream", ck.rng_stream},
                           {"counter", ck.rng_counter}};
    std::ostringstream os(std::ios::binary);
    os << header.dump() << '\n';
    const auto named = ck.params.named();
    for (const auto& [name, t] : named) write_dpat(os, t);
    for (std::size_t p = 0; p < named.size(); ++p) {
        write_dpat(os, Tensor::from_data({ck.opt.m[p].size()}, ck.opt.m[p]));
    }
    for (std::size_t p = 0; p < named.size(); ++p) {
        write_dpat(os, Tensor::from_data({ck.opt.v[p].size()}, ck.opt.v[p]));
    }
    write_file_atomic(path, os.str());
}

Checkpoint load_checkpoint(const std::string& path, std::size_t expected_n) {
    const std::string bytes = read_binary_file(path);
    const std::size_t nl = bytes.find('\n');
    if (nl == std::string::npos) throw FormatError("checkpoint missing header line");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, nl));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint header is not valid JSON: " + std::string(e.what()));
    }
    Checkpoint ck;
    try {
        if (header.at("format").get<std::string>() != "dpkpt-checkpoint") {
            throw FormatError("not a checkpoint file");
        }
        ck.cfg = config_from_json(header.at("config"));
        const auto& model = header.at("model");
        const std::size_t n = model.at("n_keypoints").get<std::size_t>();
        if (expected_n != 0 && n != expected_n) {
            throw ValidationError("checkpoint was trained with " + std::to_string(n) +
                                  " keypoints but the dataset has " + std::to_string(expected_n));
        }
        ck.mcfg = model_config_for(ck.cfg, n, model.at("img_h").get<std::size_t>(),
                                   model.at("img_w").get<std::size_t>());
        ck.epoch = header.at("epoch").get<int>();
        ck.global_step = header.at("step").get<long>();
        ck.rng_seed = header.at("rng_state").at("seed").get<std::uint64_t>();
        ck.rng_stream = header.at("rng_state").at("stream").get<std::uint64_t>();
        ck.rng_counter = header.at("rng_state").at("counter").get<std::uint64_t>();
        ck.opt.step = header.at("opt_step").get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint header field missing or mistyped: " + std::string(e.what()));
    }

    ck.params = init_params(ck.mcfg, 0);
    std::istringstream is(bytes.substr(nl + 1), std::ios::binary);
    auto named = ck.params.named();
    for (auto& [name, t] : named) {
        Tensor rec = read_dpat(is);
        if (rec.shape() != t.shape()) {
            throw ValidationError("checkpoint record '" + name + "' has shape " +
                                  shape_str(rec.shape()) + ", expected " + shape_str(t.shape()));
        }
        std::copy(rec.data(), rec.data() + rec.size(), t.data());
    }
    ck.opt.m.clear();
    ck.opt.v.clear();
    for (const auto& [name, t] : named) {
        Tensor rec = read_dpat(is);
        if (rec.size() != t.size()) throw FormatError("optimizer moment record size mismatch");
        ck.opt.m.push_back(rec.values());
    }
    for (const auto& [name, t] : named) {
        Tensor rec = read_dpat(is);
        if (rec.size() != t.size()) throw FormatError("optimizer moment record size mismatch");
        ck.opt.v.push_back(rec.values());
    }
    return ck;
}

namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed, 100 + std::uint64_t(epoch));
    for (std::size_t i = n; i-- > 1;) {
        const std::size_t j = std::size_t(rng.uniform_int(0, long(i)));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

std::string epoch_ckpt_name(int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "ckpt_epoch_%03d.ckpt", epoch);
    return buf;
}

} // namespace

TrainResult train(const Dataset& ds, const SemanticPrior& prior, const TrainConfig& cfg,
                  const std::string& out_dir, const std::string& resume_path) {
    cfg.validate();
    if (ds.size() == 0) throw ValidationError("training dataset is empty");
    const std::size_t n = ds.kps[0].count();
    check_prior_count(prior, n);
    const ModelConfig mcfg = model_config_for(cfg, n, ds.height, ds.width);
    const DiffusionSchedule sched = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir);
    const auto out = [&](const std::string& f) {
        return (std::filesystem::path(out_dir) / f).string();
    };
    write_file_atomic(out("config_resolved.txt"), serialize_train_config(cfg));

    DenoiserParams params;
    AdamW opt;
    Rng rng(cfg.seed, /*stream=*/10);
    int start_epoch = 1;
    long gstep = 0;
    if (!resume_path.empty()) {
        Checkpoint ck = load_checkpoint(resume_path, n);
        const std::string theirs = serialize_train_config(ck.cfg);
        const std::string ours = serialize_train_config(cfg);
        if (theirs != ours) {
            throw ValidationError("checkpoint config differs from requested config.\n--- checkpoint:\n" +
                                  theirs + "--- requested:\n" + ours);
        }
        params = std::move(ck.params);
        opt = std::move(ck.opt);
        rng = Rng(ck.rng_seed, ck.rng_stream);
        rng.set_counter(ck.rng_counter);
        start_epoch = ck.epoch + 1;
        gstep = ck.global_step;
    } else {
        params = init_params(mcfg, cfg.seed);
        opt.init(params);
    }

    TrainResult res;
    res.csv_path = out("train_log.csv");
    std::ostringstream csv;
    // Timing goes to a separate file so this one is identical across reruns.
    csv << "step,epoch,loss,lr\n";
    std::ostringstream timing;
    timing << "step,wall_ms\n";
    const auto t0 = std::chrono::steady_clock::now();

    try {
        for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
            const double lr = effective_lr(cfg, epoch);
            const std::vector<std::size_t> order = shuffled_indices(ds.size(), cfg.seed, epoch);
            for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), at + cfg.batch_size);
                const std::vector<std::size_t> batch(order.begin() + long(at),
                                                     order.begin() + long(end));
                const double loss = train_step(ds, batch, params, opt, sched, prior, cfg, mcfg,
                                               lr, rng);
                ++gstep;
                const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(
                                      std::chrono::steady_clock::now() - t0)
                                      .count();
                csv << gstep << ',' << epoch << ',' << fmt_double(loss) << ',' << fmt_double(lr)
                    << '\n';
                timing << gstep << ',' << wall << '\n';
                res.final_loss = loss;
            }
            Checkpoint ck;
            ck.cfg = cfg;
            ck.mcfg = mcfg;
            ck.params = params;
            ck.opt = opt;
            ck.epoch = epoch;
            ck.global_step = gstep;
            ck.rng_seed = rng.seed();
            ck.rng_stream = rng.stream();
            ck.rng_counter = rng.counter();
            const std::string p = out(epoch_ckpt_name(epoch));
            save_checkpoint(p, ck);
            res.epoch_checkpoints.push_back(p);
            if (epoch == cfg.epochs) {
                res.final_checkpoint = out("ckpt_final.ckpt");
                save_checkpoint(res.final_checkpoint, ck);
            }
        }
    } catch (const NumericError& e) {
        const std::string diag = out("diagnostic.txt");
        write_text_file(diag, std::string(e.what()) + "\n");
        write_file_atomic(res.csv_path, csv.str());
        write_file_atomic(out("timing.csv"), timing.str());
        throw NumericError(std::string(e.what()) + "; diagnostic written to " + diag);
    }
    write_file_atomic(res.csv_path, csv.str());
    write_file_atomic(out("timing.csv"), timing.str());
    return res;
}

std::vector<EvalInstance> infer_split(const Dataset& ds, const Checkpoint& ck,
                                      const SemanticPrior& prior, std::uint64_t seed,
                                      const std::string& mode) {
    const DiffusionSchedule sched = make_schedule(ck.cfg.T, ck.cfg.beta_start, ck.cfg.beta_end);
    InferOptions opts;
    opts.mode = mode;
    opts.loss_target = ck.cfg.loss_target;
    opts.vis_threshold = ck.cfg.vis_threshold;
    std::vector<EvalInstance> preds;
    preds.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Rng rng(seed, 1000 + std::uint64_t(ds.image_ids[i]));
        EvalInstance inst;
        inst.id = ds.image_ids[i];
        inst.image_id = ds.image_ids[i];
        inst.kps = infer_one(ds.images[i], ck.params, sched, prior, ck.mcfg, rng, opts);
        double s = 0.0;
        for (double v : inst.kps.score) s += v;
        inst.score = inst.kps.score.empty() ? 0.0 : s / double(inst.kps.score.size());
        preds.push_back(std::move(inst));
    }
    return preds;
}

} // namespace diffkpt
