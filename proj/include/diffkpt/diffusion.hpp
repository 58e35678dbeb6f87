#pragma once

#include "diffkpt/heatmap.hpp"
#include "diffkpt/tensor.hpp"

#include <string>
#include <vector>

namespace diffkpt {

// Timesteps run 1..T. alpha_bar(0) == 1 by convention so the final
// reverse step is exact.
struct DiffusionSchedule {
    int T = 0;
    std::vector<double> beta;       // [T], index t-1
    std::vector<double> alpha;      // 1 - beta[t]
    std::vector<double> alpha_bar;  // cumulative product, strictly decreasing

    double abar(int t) const;  // accepts 0..T
};

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end,
                                const std::string& kind = "linear");

// y_t = sqrt(abar_t) y0 + sqrt(1 - abar_t) eps
HeatmapStack forward_sample(const HeatmapStack& y0, int t, const Tensor& eps,
                            const DiffusionSchedule& sched);

// eps_hat = (y_t - sqrt(abar_t) y0_hat) / sqrt(1 - abar_t)
Tensor eps_from_x0(const HeatmapStack& y_t, const HeatmapStack& y0_hat, int t,
                   const DiffusionSchedule& sched);

// y_{t-1} = sqrt(abar_{t-1}) y0_hat + sqrt(1 - abar_{t-1}) eps_hat
HeatmapStack ddim_step(const HeatmapStack& y_t, const HeatmapStack& y0_hat, int t,
                       const DiffusionSchedule& sched);

// CSV with header t,beta,alpha,alpha_bar and one row per step.
std::string schedule_csv(const DiffusionSchedule& sched);

} // namespace diffkpt
