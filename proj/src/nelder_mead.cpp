#include "nelder_mead.hpp"

#include <algorithm>
#include <cmath>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

namespace gprinv::detail {

namespace {

constexpr double kPenalty = 1e20;

struct Context {
  const std::function<double(const std::vector<double>&)>* f;
  std::vector<double> scratch;
};

double trampoline(const gsl_vector* v, void* params) {
  auto* ctx = static_cast<Context*>(params);
  for (std::size_t i = 0; i < ctx->scratch.size(); ++i) ctx->scratch[i] = gsl_vector_get(v, i);
  const double y = (*ctx->f)(ctx->scratch);
  return std::isfinite(y) ? std::min(y, kPenalty) : kPenalty;
}

}  // namespace

SimplexResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                          const std::vector<double>& step, int max_iter, double size_tol) {
  gsl_set_error_handler_off();
  const std::size_t n = x0.size();
  Context ctx{&f, std::vector<double>(n)};
  if (n == 0) return {x0, f(x0)};

  gsl_multimin_function fn{&trampoline, n, &ctx};
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* ss = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x, i, x0[i]);
    gsl_vector_set(ss, i, step[i]);
  }
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  gsl_multimin_fminimizer_set(s, &fn, x, ss);
  for (int it = 0; it < max_iter; ++it) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), size_tol) == GSL_SUCCESS) break;
  }
  SimplexResult r;
  r.x.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.x[i] = gsl_vector_get(s->x, i);
  r.value = s->fval;
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(ss);
  gsl_vector_free(x);
  return r;
}

}  // namespace gprinv::detail
