#include "diffkpt/diffusion.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"

#include <cmath>
#include <sstream>

namespace diffkpt {

double DiffusionSchedule::abar(int t) const {
    if (t < 0 || t > T) throw ConfigError("timestep " + std::to_string(t) + " outside 0.." + std::to_string(T));
    return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t) - 1];
}

DiffusionSchedule make_schedule(int T, double beta_start, double beta_end,
                                const std::string& kind) {
    if (kind != "linear") throw ConfigError("unknown schedule kind '" + kind + "'");
    if (T < 1) throw ConfigError("schedule needs T >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
    }
    DiffusionSchedule s;
    s.T = T;
    s.beta.resize(static_cast<std::size_t>(T));
    s.alpha.resize(static_cast<std::size_t>(T));
    s.alpha_bar.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        const double frac = T == 1 ? 0.0 : double(t) / double(T - 1);
        const double b = beta_start + (beta_end - beta_start) * frac;
        s.beta[static_cast<std::size_t>(t)] = b;
        s.alpha[static_cast<std::size_t>(t)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

static void check_step(int t, const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.T) {
        throw ConfigError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(sched.T));
    }
}

HeatmapStack forward_sample(const HeatmapStack& y0, int t, const Tensor& eps,
                            const DiffusionSchedule& sched) {
    check_step(t, sched);
    if (eps.shape() != y0.values.shape()) {
        throw ShapeError("forward_sample: eps " + shape_str(eps.shape()) + " vs y0 " +
                         shape_str(y0.values.shape()));
    }
    const double ab = sched.abar(t);
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    HeatmapStack out;
    out.stride = y0.stride;
    out.values = Tensor::zeros(y0.values.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = a * y0.values[i] + b * eps[i];
    }
    return out;
}

Tensor eps_from_x0(const HeatmapStack& y_t, const HeatmapStack& y0_hat, int t,
                   const DiffusionSchedule& sched) {
    check_step(t, sched);
    if (y_t.values.shape() != y0_hat.values.shape()) {
        throw ShapeError("eps_from_x0: y_t " + shape_str(y_t.values.shape()) + " vs y0_hat " +
                         shape_str(y0_hat.values.shape()));
    }
    const double ab = sched.abar(t);
    if (ab >= 1.0) throw NumericError("eps_from_x0: alpha_bar(t) == 1 is singular");
    const double a = std::sqrt(ab), inv = 1.0 / std::sqrt(1.0 - ab);
    Tensor eps = Tensor::zeros(y_t.values.shape());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps[i] = (y_t.values[i] - a * y0_hat.values[i]) * inv;
    }
    return eps;
}

HeatmapStack ddim_step(const HeatmapStack& y_t, const HeatmapStack& y0_hat, int t,
                       const DiffusionSchedule& sched) {
    check_step(t, sched);
    Tensor eps = eps_from_x0(y_t, y0_hat, t, sched);
    const double ab_prev = sched.abar(t - 1);
    const double a = std::sqrt(ab_prev), b = std::sqrt(1.0 - ab_prev);
    HeatmapStack out;
    out.stride = y_t.stride;
    out.values = Tensor::zeros(y_t.values.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = a * y0_hat.values[i] + b * eps[i];
    }
    return out;
}

std::string schedule_csv(const DiffusionSchedule& sched) {
    std::ostringstream os;
    os << "t,beta,alpha,alpha_bar\n";
    for (int t = 1; t <= sched.T; ++t) {
        const std::size_t i = static_cast<std::size_t>(t) - 1;
        os << t << ',' << fmt_double(sched.beta[i]) << ',' << fmt_double(sched.alpha[i]) << ','
           << fmt_double(sched.alpha_bar[i]) << '\n';
    }
    return os.str();
}

} // namespace diffkpt
