#include "diffkpt/metrics.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace diffkpt {

EvalConfig::EvalConfig() {
    oks_thresholds.reserve(10);
    for (int i = 0; i < 10; ++i) oks_thresholds.push_back(0.50 + 0.05 * i);
}

double EvalConfig::kappa_for(std::size_t i) const {
    if (kappa.empty()) return kappa_default;
    if (i >= kappa.size()) throw ConfigError("kappa list shorter than keypoint count");
    return kappa[i];
}

void EvalConfig::validate() const {
    if (kappa_default <= 0.0) throw ConfigError("kappa must be positive");
    for (double k : kappa) {
        if (k <= 0.0) throw ConfigError("kappa must be positive");
    }
    for (std::size_t i = 1; i < oks_thresholds.size(); ++i) {
        if (oks_thresholds[i] <= oks_thresholds[i - 1]) {
            throw ConfigError("oks thresholds must be strictly increasing");
        }
    }
    if (pck_alpha <= 0.0) throw ConfigError("pck alpha must be positive");
    if (pck_norm_rule != "bbox_max_side") {
        throw ConfigError("unknown pck norm rule '" + pck_norm_rule + "'");
    }
    if (auc_max <= 0.0 || auc_step <= 0.0 || auc_step > auc_max) {
        throw ConfigError("auc range invalid");
    }
}

double oks(const KeypointSet& pred, const KeypointSet& gt, const EvalConfig& cfg) {
    const std::size_t n = gt.count();
    if (pred.count() != n) {
        throw ValidationError("keypoint counts disagree: pred " + std::to_string(pred.count()) +
                              " vs gt " + std::to_string(n));
    }
    const double s2 = gt.bbox_w * gt.bbox_h;
    double acc = 0.0;
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (gt.visibility[i] <= 0) continue;
        ++labeled;
        const double dx = pred.x[i] - gt.x[i];
        const double dy = pred.y[i] - gt.y[i];
        const double k = cfg.kappa_for(i);
        acc += std::exp(-(dx * dx + dy * dy) / (2.0 * s2 * k * k));
    }
    if (labeled == 0) throw ValidationError("OKS undefined: gt has no labeled keypoint");
    return acc / double(labeled);
}

double tight_kp_bbox_area(const KeypointSet& kps) {
    if (kps.count() == 0) return 0.0;
    double minx = kps.x[0], maxx = kps.x[0], miny = kps.y[0], maxy = kps.y[0];
    for (std::size_t i = 1; i < kps.count(); ++i) {
        minx = std::min(minx, kps.x[i]);
        maxx = std::max(maxx, kps.x[i]);
        miny = std::min(miny, kps.y[i]);
        maxy = std::max(maxy, kps.y[i]);
    }
    return (maxx - minx) * (maxy - miny);
}

namespace {

struct ImageCase {
    std::vector<const EvalInstance*> preds;  // score desc, id asc
    std::vector<const EvalInstance*> gts;    // id asc, evaluable only
    std::vector<std::vector<double>> oks_mat;  // [pred][gt]
    std::vector<double> pred_area;
    std::vector<double> gt_area;
};

bool in_band(double area, double lo, double hi) { return area > lo && area <= hi; }

std::vector<ImageCase> build_cases(const std::vector<EvalInstance>& preds,
                                   const std::vector<EvalInstance>& gts,
                                   const EvalConfig& cfg, int* skipped_unlabeled) {
    std::map<int, ImageCase> by_image;
    for (const auto& g : gts) {
        bool labeled = false;
        for (int v : g.kps.visibility) labeled = labeled || v > 0;
        if (!labeled) {
            if (skipped_unlabeled) ++*skipped_unlabeled;
            continue;  // counted, never silently dropped
        }
        by_image[g.image_id].gts.push_back(&g);
    }
    for (const auto& p : preds) by_image[p.image_id].preds.push_back(&p);

    std::vector<ImageCase> cases;
    cases.reserve(by_image.size());
    for (auto& [image_id, c] : by_image) {
        std::sort(c.gts.begin(), c.gts.end(),
                  [](const EvalInstance* a, const EvalInstance* b) { return a->id < b->id; });
        std::sort(c.preds.begin(), c.preds.end(), [](const EvalInstance* a, const EvalInstance* b) {
            if (a->score != b->score) return a->score > b->score;
            return a->id < b->id;
        });
        c.oks_mat.assign(c.preds.size(), std::vector<double>(c.gts.size(), 0.0));
        for (std::size_t p = 0; p < c.preds.size(); ++p) {
            for (std::size_t g = 0; g < c.gts.size(); ++g) {
                c.oks_mat[p][g] = oks(c.preds[p]->kps, c.gts[g]->kps, cfg);
            }
        }
        c.pred_area.reserve(c.preds.size());
        for (const auto* p : c.preds) c.pred_area.push_back(tight_kp_bbox_area(p->kps));
        c.gt_area.reserve(c.gts.size());
        for (const auto* g : c.gts) c.gt_area.push_back(g->kps.bbox_w * g->kps.bbox_h);
        cases.push_back(std::move(c));
    }
    return cases;
}

struct Pooled {
    double score;
    int image_id;
    int id;
    bool tp;
};

// Greedy match of one image at one threshold within one gt area band.
// Returns matched flags per pred; counts matched gts.
std::vector<bool> match_image(const ImageCase& c, double tau, double band_lo, double band_hi,
                              std::size_t max_dets, std::size_t* matched_gts) {
    std::vector<bool> gt_taken(c.gts.size(), false);
    std::vector<bool> pred_matched(c.preds.size(), false);
    const std::size_t np = std::min(c.preds.size(), max_dets);
    for (std::size_t p = 0; p < np; ++p) {
        double best = -1.0;
        std::size_t best_g = 0;
        bool found = false;
        for (std::size_t g = 0; g < c.gts.size(); ++g) {
            if (gt_taken[g] || !in_band(c.gt_area[g], band_lo, band_hi)) continue;
            const double v = c.oks_mat[p][g];
            if (v >= tau && v > best) {  // strict: OKS ties keep the smallest gt id
                best = v;
                best_g = g;
                found = true;
            }
        }
        if (found) {
            gt_taken[best_g] = true;
            pred_matched[p] = true;
            if (matched_gts) ++*matched_gts;
        }
    }
    return pred_matched;
}

// Pooled 101-point interpolated AP over all images for one threshold/band.
double ap_at(const std::vector<ImageCase>& cases, double tau, double band_lo, double band_hi) {
    std::size_t n_gts = 0;
    std::vector<Pooled> pool;
    for (const auto& c : cases) {
        for (std::size_t g = 0; g < c.gts.size(); ++g) {
            if (in_band(c.gt_area[g], band_lo, band_hi)) ++n_gts;
        }
        const std::vector<bool> matched =
            match_image(c, tau, band_lo, band_hi, c.preds.size(), nullptr);
        for (std::size_t p = 0; p < c.preds.size(); ++p) {
            if (!matched[p] && !in_band(c.pred_area[p], band_lo, band_hi)) {
                continue;  // unmatched prediction outside the band is ignored
            }
            pool.push_back({c.preds[p]->score, c.preds[p]->image_id, c.preds[p]->id, matched[p]});
        }
    }
    if (n_gts == 0) return 0.0;
    std::sort(pool.begin(), pool.end(), [](const Pooled& a, const Pooled& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.id < b.id;
    });
    std::vector<double> recall, precision;
    recall.reserve(pool.size());
    precision.reserve(pool.size());
    std::size_t tp = 0, fp = 0;
    for (const auto& d : pool) {
        d.tp ? ++tp : ++fp;
        recall.push_back(double(tp) / double(n_gts));
        precision.push_back(double(tp) / double(tp + fp));
    }
    // max-to-the-right envelope, then sample 101 evenly spaced recalls
    for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double acc = 0.0;
    for (int j = 0; j <= 100; ++j) {
        const double r = double(j) / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) {
            acc += precision[static_cast<std::size_t>(it - recall.begin())];
        }
    }
    return acc / 101.0;
}

} // namespace

ApArRecord coco_ap_ar(const std::vector<EvalInstance>& preds,
                      const std::vector<EvalInstance>& gts, const EvalConfig& cfg) {
    cfg.validate();
    ApArRecord rec;
    const std::vector<ImageCase> cases = build_cases(preds, gts, cfg, &rec.skipped_unlabeled);
    const double inf = std::numeric_limits<double>::infinity();

    double ap_all = 0.0, ap_m = 0.0, ap_l = 0.0, ar_sum = 0.0;
    std::size_t total_gts = 0;
    for (const auto& c : cases) total_gts += c.gts.size();
    for (double tau : cfg.oks_thresholds) {
        ap_all += ap_at(cases, tau, -inf, inf);
        ap_m += ap_at(cases, tau, cfg.area_m_lo, cfg.area_m_hi);
        ap_l += ap_at(cases, tau, cfg.area_m_hi, inf);
        std::size_t matched = 0;
        for (const auto& c : cases) {
            match_image(c, tau, -inf, inf, static_cast<std::size_t>(cfg.ar_max_dets), &matched);
        }
        ar_sum += total_gts == 0 ? 0.0 : double(matched) / double(total_gts);
    }
    rec.AP50 = ap_at(cases, 0.50, -inf, inf);
    rec.AP75 = ap_at(cases, 0.75, -inf, inf);
    const double nt = double(cfg.oks_thresholds.size());
    rec.AP = ap_all / nt;
    rec.AP_M = ap_m / nt;
    rec.AP_L = ap_l / nt;
    rec.AR = ar_sum / nt;
    return rec;
}

namespace {

// gt id -> best pred of the same image (highest score, ties by pred id)
std::map<int, const EvalInstance*> pair_by_image(const std::vector<EvalInstance>& preds) {
    std::map<int, const EvalInstance*> best;
    for (const auto& p : preds) {
        auto it = best.find(p.image_id);
        if (it == best.end() || p.score > it->second->score ||
            (p.score == it->second->score && p.id < it->second->id)) {
            best[p.image_id] = &p;
        }
    }
    return best;
}

} // namespace

double pck(const std::vector<EvalInstance>& preds, const std::vector<EvalInstance>& gts,
           double alpha, const EvalConfig& cfg, int* skipped_degenerate) {
    cfg.validate();
    if (alpha <= 0.0) throw ConfigError("pck alpha must be positive");
    const auto best = pair_by_image(preds);
    std::size_t total = 0, correct = 0;
    for (const auto& g : gts) {
        const double norm = std::max(g.kps.bbox_w, g.kps.bbox_h);
        if (norm <= 0.0) {  // zero-extent bbox, instance skipped with counter
            if (skipped_degenerate) ++*skipped_degenerate;
            continue;
        }
        const auto it = best.find(g.image_id);
        for (std::size_t i = 0; i < g.kps.count(); ++i) {
            if (g.kps.visibility[i] <= 0) continue;
            ++total;
            if (it == best.end()) continue;  // no prediction: counted incorrect
            const double dx = it->second->kps.x[i] - g.kps.x[i];
            const double dy = it->second->kps.y[i] - g.kps.y[i];
            if (std::sqrt(dx * dx + dy * dy) / norm < alpha) ++correct;
        }
    }
    return total == 0 ? 0.0 : double(correct) / double(total);
}

double auc(const std::vector<EvalInstance>& preds, const std::vector<EvalInstance>& gts,
           const EvalConfig& cfg) {
    cfg.validate();
    const int steps = int(std::llround(cfg.auc_max / cfg.auc_step));
    double integral = 0.0;
    double prev = 0.0;  // PCK at alpha=0 is 0 by the strict inequality
    for (int i = 1; i <= steps; ++i) {
        const double a = cfg.auc_step * i;
        const double cur = pck(preds, gts, a, cfg);
        integral += 0.5 * (prev + cur) * cfg.auc_step;
        prev = cur;
    }
    return integral / cfg.auc_max;
}

std::vector<EvalInstance> load_gt_instances(const std::string& annotation_path) {
    nlohmann::json ann;
    try {
        ann = nlohmann::json::parse(read_text_file(annotation_path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation file is not valid JSON: " + std::string(e.what()));
    }
    std::vector<EvalInstance> out;
    try {
        for (const auto& a : ann.at("annotations")) {
            EvalInstance inst;
            inst.id = a.contains("id") ? a.at("id").get<int>() : int(out.size());
            inst.image_id = a.at("image_id").get<int>();
            const auto flat = a.at("keypoints").get<std::vector<double>>();
            if (flat.size() % 3 != 0) throw FormatError("keypoints length not a multiple of 3");
            for (std::size_t i = 0; i < flat.size(); i += 3) {
                inst.kps.x.push_back(flat[i]);
                inst.kps.y.push_back(flat[i + 1]);
                inst.kps.visibility.push_back(int(flat[i + 2]));
            }
            const auto bbox = a.at("bbox").get<std::vector<double>>();
            if (bbox.size() != 4) throw FormatError("bbox must have 4 entries");
            inst.kps.bbox_x = bbox[0];
            inst.kps.bbox_y = bbox[1];
            inst.kps.bbox_w = bbox[2];
            inst.kps.bbox_h = bbox[3];
            out.push_back(std::move(inst));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("annotation field missing or mistyped: " + std::string(e.what()));
    }
    return out;
}

std::vector<EvalInstance> load_predictions(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("prediction file is not valid JSON: " + std::string(e.what()));
    }
    if (!doc.is_array()) throw FormatError("prediction file must be a JSON list");
    std::vector<EvalInstance> out;
    try {
        for (const auto& p : doc) {
            EvalInstance inst;
            inst.id = p.contains("id") ? p.at("id").get<int>() : int(out.size());
            inst.image_id = p.at("image_id").get<int>();
            inst.score = p.at("score").get<double>();
            const auto flat = p.at("keypoints").get<std::vector<double>>();
            if (flat.size() % 3 != 0) throw FormatError("keypoints length not a multiple of 3");
            for (std::size_t i = 0; i < flat.size(); i += 3) {
                inst.kps.x.push_back(flat[i]);
                inst.kps.y.push_back(flat[i + 1]);
                inst.kps.visibility.push_back(2);
                inst.kps.score.push_back(std::clamp(flat[i + 2], 0.0, 1.0));
            }
            out.push_back(std::move(inst));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("prediction field missing or mistyped: " + std::string(e.what()));
    }
    return out;
}

std::string encode_predictions(const std::vector<EvalInstance>& preds) {
    nlohmann::ordered_json doc = nlohmann::ordered_json::array();
    for (const auto& p : preds) {
        nlohmann::ordered_json j;
        j["id"] = p.id;
        j["image_id"] = p.image_id;
        nlohmann::ordered_json flat = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < p.kps.count(); ++i) {
            flat.push_back(p.kps.x[i]);
            flat.push_back(p.kps.y[i]);
            flat.push_back(p.kps.score.empty() ? 1.0 : p.kps.score[i]);
        }
        j["keypoints"] = flat;
        j["score"] = p.score;
        doc.push_back(j);
    }
    return doc.dump(2) + "\n";
}

} // namespace diffkpt
