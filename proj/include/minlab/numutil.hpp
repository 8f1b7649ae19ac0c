#pragma once

#include <cmath>
#include <vector>

namespace minlab {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    LinearFit f;
    const size_t n = std::min(x.size(), y.size());
    if (n < 2) return f;
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
        syy += y[i] * y[i];
    }
    const double dn = double(n);
    const double vx = sxx - sx * sx / dn;
    const double vy = syy - sy * sy / dn;
    const double cxy = sxy - sx * sy / dn;
    if (vx <= 0.0) return f;
    f.slope = cxy / vx;
    f.intercept = (sy - f.slope * sx) / dn;
    f.r2 = (vy > 0.0) ? (cxy * cxy) / (vx * vy) : 1.0;
    return f;
}

}  // namespace minlab
