#pragma once

#include "diffkpt/heatmap.hpp"

#include <string>
#include <vector>

namespace diffkpt {

struct EvalConfig {
    std::vector<double> kappa;   // per keypoint; empty means uniform kappa_default
    double kappa_default = 0.08;
    std::vector<double> oks_thresholds;  // default 0.50:0.05:0.95
    double pck_alpha = 0.05;
    std::string pck_norm_rule = "bbox_max_side";
    double auc_max = 0.5;
    double auc_step = 0.01;
    double area_m_lo = 32.0 * 32.0, area_m_hi = 96.0 * 96.0;  // medium band (lo, hi]
    int ar_max_dets = 20;

    EvalConfig();
    double kappa_for(std::size_t i) const;
    void validate() const;
};

struct EvalInstance {
    int id = 0;
    int image_id = 0;
    KeypointSet kps;
    double score = 1.0;  // instance confidence, predictions only
};

struct ApArRecord {
    double AP = 0, AP50 = 0, AP75 = 0, AP_M = 0, AP_L = 0, AR = 0;
    int skipped_unlabeled = 0;  // gts with no labeled keypoint, never matched
};

// Scale-normalized keypoint similarity over the gt's labeled keypoints;
// s^2 is the gt bbox area. Throws ValidationError when the gt has no
// labeled keypoint.
double oks(const KeypointSet& pred, const KeypointSet& gt, const EvalConfig& cfg);

// COCO-style sweep: greedy per-image matching at each threshold
// (predictions by score descending, ties by id; gt ties by id), pooled
// 101-point interpolated AP, AR with a per-image detection cap.
ApArRecord coco_ap_ar(const std::vector<EvalInstance>& preds,
                      const std::vector<EvalInstance>& gts, const EvalConfig& cfg);

// Fraction of labeled gt keypoints within alpha * max(bbox side), strict.
// Instances with a zero-extent bbox are skipped and counted.
double pck(const std::vector<EvalInstance>& preds, const std::vector<EvalInstance>& gts,
           double alpha, const EvalConfig& cfg, int* skipped_degenerate = nullptr);

// Trapezoidal area under PCK(alpha) for alpha in [0, auc_max], normalized
// by auc_max.
double auc(const std::vector<EvalInstance>& preds, const std::vector<EvalInstance>& gts,
           const EvalConfig& cfg);

// Area of the tight box over all keypoint coords; used to band predictions.
double tight_kp_bbox_area(const KeypointSet& kps);

// Ground truths from the COCO-style annotation JSON (images not loaded).
std::vector<EvalInstance> load_gt_instances(const std::string& annotation_path);

// Predictions list: [{image_id, keypoints[3N], score}]; the keypoint
// triplet's third slot holds the per-keypoint confidence.
std::vector<EvalInstance> load_predictions(const std::string& path);
std::string encode_predictions(const std::vector<EvalInstance>& preds);

} // namespace diffkpt
