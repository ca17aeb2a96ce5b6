#pragma once

#include <functional>

namespace shadownet {

/// Adaptive Simpson integral of f over [a, b] (b < a gives the signed
/// integral). Stops refining a panel once its error estimate is below
/// eps scaled to the panel, or after max_depth halvings.
double integrate_simpson(const std::function<double(double)>& f, double a, double b, double eps, int max_depth);

}  // namespace shadownet
