#include "nmmt/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace nmmt {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                             const NelderMeadOptions& options)
{
    const auto n = x0.size();
    const double dn = static_cast<double>(std::max<Eigen::Index>(n, 1));
    const double reflect = 1.0;
    const double expand = 1.0 + 2.0 / dn;
    const double contract = 0.75 - 1.0 / (2.0 * dn);
    const double shrink = 1.0 - 1.0 / dn;

    NelderMeadResult res;
    auto eval = [&](const Eigen::VectorXd& x) {
        ++res.evals;
        const double v = f(x);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };

    std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> vals(static_cast<std::size_t>(n + 1));
    for (Eigen::Index k = 0; k < n; ++k) {
        const double step = (x0[k] != 0.0) ? options.initial_step * std::max(1.0, std::abs(x0[k])) * 0.5
                                            : options.initial_step;
        pts[static_cast<std::size_t>(k + 1)][k] += step;
    }
    for (std::size_t k = 0; k < pts.size(); ++k) {
        vals[k] = eval(pts[k]);
    }
    std::vector<std::size_t> order(pts.size());

    while (res.evals < options.max_evals) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[order.size() - 2];

        double diameter = 0.0;
        for (const auto& p : pts) {
            diameter = std::max(diameter, (p - pts[best]).lpNorm<Eigen::Infinity>());
        }
        if (vals[worst] - vals[best] <= options.f_tol && diameter <= options.x_tol) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < pts.size(); ++k) {
            if (k != worst) {
                centroid += pts[k];
            }
        }
        centroid /= dn;

        const Eigen::VectorXd xr = centroid + reflect * (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < vals[best]) {
            const Eigen::VectorXd xe = centroid + expand * (xr - centroid);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                vals[worst] = fe;
            } else {
                pts[worst] = xr;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr < vals[second]) {
            pts[worst] = xr;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr < vals[worst];
        const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + contract * (xr - centroid))
                                           : Eigen::VectorXd(centroid + contract * (pts[worst] - centroid));
        const double fc = eval(xc);
        if (fc < (outside ? fr : vals[worst])) {
            pts[worst] = xc;
            vals[worst] = fc;
            continue;
        }
        for (std::size_t k = 0; k < pts.size(); ++k) {
            if (k == best) {
                continue;
            }
            pts[k] = pts[best] + shrink * (pts[k] - pts[best]);
            vals[k] = eval(pts[k]);
        }
    }
    const auto it = std::min_element(vals.begin(), vals.end());
    res.x = pts[static_cast<std::size_t>(it - vals.begin())];
    res.f = *it;
    return res;
}

} // namespace nmmt
