#include "diffkpt/diffusion.hpp"
#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"
#include "diffkpt/metrics.hpp"
#include "diffkpt/pipeline.hpp"
#include "diffkpt/plot.hpp"
#include "diffkpt/priors.hpp"
#include "diffkpt/rng.hpp"
#include "diffkpt/synthdata.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace diffkpt;

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string hash_hex(const std::string& path) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(read_binary_file(path))));
    return buf;
}

// Written atomically before a command mutates its outputs.
void write_manifest(const std::string& path, const std::string& subcommand,
                    const std::vector<std::string>& argv_tail, std::uint64_t seed,
                    const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& output_paths,
                    const std::string& resolved_config = "") {
    nlohmann::ordered_json m;
    m["subcommand"] = subcommand;
    m["command"] = argv_tail;
    m["seed"] = seed;
    nlohmann::ordered_json inputs;
    for (const auto& p : input_paths) inputs[p] = hash_hex(p);
    m["inputs"] = inputs;
    m["outputs"] = output_paths;
    if (!resolved_config.empty()) m["config"] = resolved_config;
    m["timestamp"] = iso_now();
    write_file_atomic(path, m.dump(2) + "\n");
}

std::vector<std::string> keypoint_names_from_annotations(const std::string& path) {
    nlohmann::json ann;
    try {
        ann = nlohmann::json::parse(read_text_file(path));
        return ann.at("categories").at(0).at("keypoints").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("cannot read keypoint names from " + path + ": " + e.what());
    }
}

int cmd_gen_data(const std::string& spec_name, std::size_t n, std::uint64_t seed,
                 const std::string& out_dir, std::size_t canvas, double p_occ,
                 const std::vector<std::string>& argv_tail) {
    if (spec_name != "quadruped") {
        throw ConfigError("unknown skeleton spec '" + spec_name + "' (available: quadruped)");
    }
    const SkeletonSpec spec = builtin_quadruped();
    RenderOptions opts;
    opts.canvas_h = canvas;
    opts.canvas_w = canvas;
    opts.p_occ = p_occ;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir);
    const std::string ann_path =
        (std::filesystem::path(out_dir) / "annotations.json").string();
    write_manifest((std::filesystem::path(out_dir) / "run_manifest.json").string(), "gen-data",
                   argv_tail, seed, {}, {out_dir, ann_path});
    generate_split(spec, n, seed, out_dir, opts);
    std::cout << "wrote " << n << " samples to " << out_dir << "\n";
    return 0;
}

int cmd_embed(const std::string& species, const std::string& keypoints_from, std::size_t d,
              std::uint64_t seed, const std::string& out, const std::string& import_path,
              const std::vector<std::string>& argv_tail) {
    std::vector<std::string> inputs;
    if (!keypoints_from.empty()) inputs.push_back(keypoints_from);
    if (!import_path.empty()) inputs.push_back(import_path);
    write_manifest(out + ".manifest.json", "embed", argv_tail, seed, inputs, {out});
    if (!import_path.empty()) {
        SemanticPrior prior = load_embeddings(import_path);
        if (!keypoints_from.empty()) {
            check_prior_count(prior, keypoint_names_from_annotations(keypoints_from).size());
        }
        save_embeddings(out, prior);
        std::cout << "validated and re-exported " << prior.F_l.extent(0) << " keypoint priors to "
                  << out << "\n";
        return 0;
    }
    if (species.empty() || keypoints_from.empty()) {
        throw ConfigError("embed needs --species and --keypoints-from (or --import)");
    }
    const std::vector<std::string> names = keypoint_names_from_annotations(keypoints_from);
    const PromptBundle bundle = build_prompts(species, names);
    const SemanticPrior prior = pseudo_embed(bundle, d, seed);
    save_embeddings(out, prior);

    std::ostringstream prompts;
    prompts << "template_version=" << kPromptTemplateVersion << "\n";
    prompts << "species=" << bundle.species << "\n";
    prompts << "[global]\n" << bundle.global_prompt << "\n";
    prompts << "[keypoints]\n";
    for (std::size_t i = 0; i < names.size(); ++i) {
        prompts << names[i] << ": " << bundle.keypoint_prompts[i] << "\n";
    }
    write_file_atomic(out + ".prompts.txt", prompts.str());
    std::cout << "wrote " << names.size() << " keypoint priors (d=" << d << ") to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& embeddings, const std::string& config,
              const std::string& out_dir, const std::string& resume,
              const std::vector<std::string>& argv_tail) {
    const TrainConfig cfg = parse_train_config(read_text_file(config));
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir);
    std::vector<std::string> inputs = {data, embeddings, config};
    if (!resume.empty()) inputs.push_back(resume);
    write_manifest((std::filesystem::path(out_dir) / "run_manifest.json").string(), "train",
                   argv_tail, cfg.seed, inputs, {out_dir}, serialize_train_config(cfg));
    const Dataset ds = load_split(data);
    const SemanticPrior prior = load_embeddings(embeddings);
    const TrainResult res = train(ds, prior, cfg, out_dir, resume);
    std::cout << "trained " << cfg.epochs << " epochs, final loss " << fmt_double(res.final_loss)
              << ", checkpoint " << res.final_checkpoint << "\n";
    return 0;
}

int cmd_infer(const std::string& data, const std::string& checkpoint,
              const std::string& embeddings, const std::string& out, std::string mode,
              std::uint64_t seed, const std::vector<std::string>& argv_tail) {
    write_manifest(out + ".manifest.json", "infer", argv_tail, seed,
                   {data, checkpoint, embeddings}, {out});
    const Dataset ds = load_split(data);
    if (ds.size() == 0) throw ValidationError("dataset is empty");
    const Checkpoint ck = load_checkpoint(checkpoint, ds.kps[0].count());
    const SemanticPrior prior = load_embeddings(embeddings);
    if (mode.empty()) mode = ck.cfg.infer_mode;
    const std::vector<EvalInstance> preds = infer_split(ds, ck, prior, seed, mode);
    write_file_atomic(out, encode_predictions(preds));
    std::cout << "wrote " << preds.size() << " predictions (" << mode << " mode) to " << out
              << "\n";
    return 0;
}

int cmd_eval(const std::string& gt_path, const std::string& pred_path, const std::string& out_dir,
             double kappa, double pck_alpha, const std::vector<std::string>& argv_tail) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create directory " + out_dir);
    const std::string json_path = (std::filesystem::path(out_dir) / "report.json").string();
    const std::string csv_path = (std::filesystem::path(out_dir) / "report.csv").string();
    write_manifest((std::filesystem::path(out_dir) / "run_manifest.json").string(), "eval",
                   argv_tail, 0, {gt_path, pred_path}, {json_path, csv_path});

    const std::vector<EvalInstance> gts = load_gt_instances(gt_path);
    const std::vector<EvalInstance> preds = load_predictions(pred_path);
    for (const auto& p : preds) {
        if (!gts.empty() && p.kps.count() != gts[0].kps.count()) {
            throw ValidationError("prediction keypoints count " + std::to_string(p.kps.count()) +
                                  " does not match ground truth " +
                                  std::to_string(gts[0].kps.count()));
        }
    }
    EvalConfig cfg;
    cfg.kappa_default = kappa;
    cfg.pck_alpha = pck_alpha;
    const ApArRecord rec = coco_ap_ar(preds, gts, cfg);
    int pck_skipped = 0;
    const double pck_v = pck(preds, gts, cfg.pck_alpha, cfg, &pck_skipped);
    const double auc_v = auc(preds, gts, cfg);

    nlohmann::ordered_json rep;
    rep["AP"] = rec.AP;
    rep["AP50"] = rec.AP50;
    rep["AP75"] = rec.AP75;
    rep["AP_M"] = rec.AP_M;
    rep["AP_L"] = rec.AP_L;
    rep["AR"] = rec.AR;
    rep["PCK"] = pck_v;
    rep["AUC"] = auc_v;
    rep["config"] = {{"kappa", cfg.kappa_default},
                     {"pck_alpha", cfg.pck_alpha},
                     {"pck_norm_rule", cfg.pck_norm_rule},
                     {"oks_thresholds", cfg.oks_thresholds},
                     {"ar_max_dets", cfg.ar_max_dets},
                     {"auc_range", {0.0, cfg.auc_max}},
                     {"auc_step", cfg.auc_step}};
    rep["counters"] = {{"gts_without_labels", rec.skipped_unlabeled},
                       {"pck_degenerate_bbox", pck_skipped}};
    write_file_atomic(json_path, rep.dump(2) + "\n");

    std::ostringstream csv;
    csv << "metric,value\n";
    csv << "AP," << fmt_double(rec.AP) << "\n";
    csv << "AP50," << fmt_double(rec.AP50) << "\n";
    csv << "AP75," << fmt_double(rec.AP75) << "\n";
    csv << "AP_M," << fmt_double(rec.AP_M) << "\n";
    csv << "AP_L," << fmt_double(rec.AP_L) << "\n";
    csv << "AR," << fmt_double(rec.AR) << "\n";
    csv << "PCK," << fmt_double(pck_v) << "\n";
    csv << "AUC," << fmt_double(auc_v) << "\n";
    write_file_atomic(csv_path, csv.str());
    std::cout << "AP " << fmt_double(rec.AP) << "  AR " << fmt_double(rec.AR) << "  PCK@"
              << fmt_double(cfg.pck_alpha) << " " << fmt_double(pck_v) << "  AUC "
              << fmt_double(auc_v) << " (kappa " << fmt_double(cfg.kappa_default) << ", norm "
              << cfg.pck_norm_rule << ")\n";
    std::cout << "report written to " << json_path << "\n";
    return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& x_col, const std::string& y_col,
             const std::string& out, const std::vector<std::string>& argv_tail) {
    write_manifest(out + ".manifest.json", "plot", argv_tail, 0, {csv_path}, {out});
    const std::string text = read_text_file(csv_path);
    const std::vector<double> xs = csv_column(text, x_col);
    const std::vector<double> ys = csv_column(text, y_col);
    write_file_atomic(out, render_line_svg(xs, ys, x_col, y_col,
                                           y_col + " vs " + x_col));
    std::cout << "wrote " << xs.size() << "-point plot to " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "diffkpt: conditional-denoising animal keypoint estimation on synthetic data.\n"
        "Formats: tensor records DPAT v1, checkpoints dpkpt-checkpoint v1, prompt "
        "templates v1, COCO-style annotations."};
    app.require_subcommand(1);
    std::vector<std::string> argv_tail(argv + 1, argv + argc);

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic split");
    std::string gen_spec = "quadruped", gen_out;
    std::size_t gen_n = 0, gen_canvas = 64;
    std::uint64_t gen_seed = 1;
    double gen_pocc = 0.3;
    gen->add_option("--spec", gen_spec, "Skeleton spec name");
    gen->add_option("--n", gen_n, "Sample count")->required();
    gen->add_option("--seed", gen_seed, "Split seed");
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--canvas", gen_canvas, "Canvas size in pixels");
    gen->add_option("--p-occ", gen_pocc, "Occluder probability");

    auto* emb = app.add_subcommand("embed", "Build or import conditioning embeddings");
    std::string emb_species, emb_from, emb_out, emb_import;
    std::size_t emb_d = 64;
    std::uint64_t emb_seed = 1;
    emb->add_option("--species", emb_species, "Species name for the prompts");
    emb->add_option("--keypoints-from", emb_from, "Annotation JSON naming the keypoints")
        ->check(CLI::ExistingFile);
    emb->add_option("--d", emb_d, "Embedding width");
    emb->add_option("--seed", emb_seed, "Embedding seed");
    emb->add_option("--out", emb_out, "Output embedding file")->required();
    emb->add_option("--import", emb_import, "Validate and re-export an external embedding file")
        ->check(CLI::ExistingFile);

    auto* tr = app.add_subcommand("train", "Train the denoiser");
    std::string tr_data, tr_emb, tr_cfg, tr_out, tr_resume;
    tr->add_option("--data", tr_data, "Training annotation JSON")
        ->required()
        ->check(CLI::ExistingFile);
    tr->add_option("--embeddings", tr_emb, "Embedding file")->required()->check(CLI::ExistingFile);
    tr->add_option("--config", tr_cfg, "key=value config file")
        ->required()
        ->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "Output directory")->required();
    tr->add_option("--resume", tr_resume, "Checkpoint to continue from")->check(CLI::ExistingFile);

    auto* inf = app.add_subcommand("infer", "Run T-step inference over a split");
    std::string inf_data, inf_ckpt, inf_emb, inf_out, inf_mode;
    std::uint64_t inf_seed = 7;
    inf->add_option("--data", inf_data, "Annotation JSON of the split")
        ->required()
        ->check(CLI::ExistingFile);
    inf->add_option("--checkpoint", inf_ckpt, "Trained checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    inf->add_option("--embeddings", inf_emb, "Embedding file")->required()->check(CLI::ExistingFile);
    inf->add_option("--out", inf_out, "Output predictions JSON")->required();
    inf->add_option("--mode", inf_mode, "literal or ddim (default: checkpoint config)");
    inf->add_option("--seed", inf_seed, "Noise seed");

    auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
    std::string ev_gt, ev_pred, ev_out;
    double ev_kappa = 0.08, ev_alpha = 0.05;
    ev->add_option("--gt", ev_gt, "Ground-truth annotation JSON")
        ->required()
        ->check(CLI::ExistingFile);
    ev->add_option("--pred", ev_pred, "Predictions JSON")->required()->check(CLI::ExistingFile);
    ev->add_option("--out", ev_out, "Report directory")->required();
    ev->add_option("--kappa", ev_kappa, "Uniform OKS falloff constant");
    ev->add_option("--pck-alpha", ev_alpha, "PCK threshold");

    auto* pl = app.add_subcommand("plot", "Render a CSV column pair as an SVG line chart");
    std::string pl_csv, pl_x = "step", pl_y = "loss", pl_out;
    pl->add_option("--csv", pl_csv, "Input CSV")->required()->check(CLI::ExistingFile);
    pl->add_option("--x", pl_x, "X column");
    pl->add_option("--y", pl_y, "Y column");
    pl->add_option("--out", pl_out, "Output SVG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_spec, gen_n, gen_seed, gen_out, gen_canvas, gen_pocc,
                                argv_tail);
        }
        if (emb->parsed()) {
            return cmd_embed(emb_species, emb_from, emb_d, emb_seed, emb_out, emb_import,
                             argv_tail);
        }
        if (tr->parsed()) return cmd_train(tr_data, tr_emb, tr_cfg, tr_out, tr_resume, argv_tail);
        if (inf->parsed()) {
            return cmd_infer(inf_data, inf_ckpt, inf_emb, inf_out, inf_mode, inf_seed, argv_tail);
        }
        if (ev->parsed()) return cmd_eval(ev_gt, ev_pred, ev_out, ev_kappa, ev_alpha, argv_tail);
        if (pl->parsed()) return cmd_plot(pl_csv, pl_x, pl_y, pl_out, argv_tail);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
