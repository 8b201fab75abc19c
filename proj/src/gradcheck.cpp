#include "hetcs/gradcheck.hpp"

#include <cmath>

namespace hetcs::ad {

namespace {

double evaluate(const LossBuilder& loss, const std::vector<Matrix*>& params) {
  Tape tape;
  std::vector<Var> handles;
  for (Matrix* p : params) handles.push_back(tape.parameter(*p));
  return loss(tape, handles).scalar();
}

}  // namespace

GradCheckReport finite_diff_check(const LossBuilder& loss, const std::vector<Matrix*>& params,
                                  double step) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> handles;
    for (Matrix* p : params) handles.push_back(tape.parameter(*p));
    Var out = loss(tape, handles);
    if (out.requires_grad()) tape.backward(out);
    for (const Var& h : handles) analytic.push_back(h.grad());
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data[i];
      p.data[i] = saved + step;
      const double up = evaluate(loss, params);
      p.data[i] = saved - step;
      const double down = evaluate(loss, params);
      p.data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[k].data[i];
      diff_sq += (a - numeric) * (a - numeric);
      a_sq += a * a;
      n_sq += numeric * numeric;
    }
    const double denom = std::sqrt(std::max(a_sq, n_sq));
    const double err = denom > 0.0 ? std::sqrt(diff_sq) / denom : 0.0;
    report.relative_errors.push_back(err);
    if (err > report.max_relative_error) {
      report.max_relative_error = err;
      report.worst_param = k;
    }
  }
  return report;
}

}  // namespace hetcs::ad
