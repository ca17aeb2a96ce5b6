#include "shadownet/quadrature.hpp"

#include <cmath>

namespace shadownet {

namespace {

double simpson(double fa, double fm, double fb, double a, double b) { return (b - a) / 6.0 * (fa + 4.0 * fm + fb); }

double refine(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
              double whole, double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double flm = f(0.5 * (a + m));
    const double frm = f(0.5 * (m + b));
    const double left = simpson(fa, flm, fm, a, m);
    const double right = simpson(fm, frm, fb, m, b);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
    return refine(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           refine(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace

double integrate_simpson(const std::function<double(double)>& f, double a, double b, double eps, int max_depth) {
    if (a == b) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double fm = f(0.5 * (a + b));
    return refine(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), eps, max_depth);
}

}  // namespace shadownet
