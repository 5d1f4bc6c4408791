#include "stabconf/bounds.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace stabconf::bounds {

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_common(const Inputs& in) {
  if (!(in.alpha > 0.0) || !(in.alpha < 1.0))
    throw std::invalid_argument("bounds: alpha in (0,1) required");
  if (!(in.eps > 0.0) || !(in.delta > 0.0))
    throw std::invalid_argument("bounds: eps, delta > 0 required");
  if (!in.profile.c)
    throw std::invalid_argument("bounds: profile.c (stability constant) missing");
  if (in.profile.p <= 0 || !(in.profile.kappa1 > 0.0) || !(in.profile.kappa2 > 0.0))
    throw std::invalid_argument("bounds: nonpositive profile constants");
}

double require_L(const Inputs& in, long long at) {
  if (!in.profile.L)
    throw std::invalid_argument("bounds: profile.L (density bound) missing");
  const double L = in.profile.L(at);
  if (!(L > 0.0)) throw std::invalid_argument("bounds: L must be positive");
  return L;
}

double dkw_threshold_term(double delta, long long n) {
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

long long resolve_fold_size(const Inputs& in) {
  if (in.m) {
    if (*in.m < 1) throw std::invalid_argument("bounds: m >= 1 required");
    return *in.m;
  }
  if (in.K) {
    if (*in.K < 1 || in.n % *in.K != 0)
      throw std::invalid_argument("bounds: K must divide n to derive m");
    return in.n / *in.K;
  }
  throw std::invalid_argument("bounds: either m or K is required");
}

Report make_report(const Inputs& in, std::string name, std::vector<Term> terms,
                   double failure_prob) {
  Report r;
  r.name = std::move(name);
  r.alpha = in.alpha;
  r.terms = std::move(terms);
  double slack = 0.0;
  for (const auto& t : r.terms) slack += t.value;
  r.threshold = in.alpha + slack;
  r.failure_prob = failure_prob;
  r.vacuous = !(r.threshold < 1.0) || !(r.failure_prob < 1.0);
  r.certified = in.profile.certified;
  r.n = in.n;
  r.eps = in.eps;
  r.delta = in.delta;
  r.m = in.m;
  r.gamma = in.gamma;
  return r;
}

}  // namespace

std::string Report::to_json() const {
  std::ostringstream out;
  out << "{\"name\":\"" << name << "\",\"alpha\":" << fmt17(alpha)
      << ",\"threshold\":" << fmt17(threshold)
      << ",\"failure_prob\":" << fmt17(failure_prob) << ",\"terms\":{";
  for (std::size_t i = 0; i < terms.size(); ++i)
    out << (i ? "," : "") << "\"" << terms[i].name
        << "\":" << fmt17(terms[i].value);
  out << "},\"vacuous\":" << (vacuous ? "true" : "false")
      << ",\"certified\":" << (certified ? "true" : "false") << ",\"n\":" << n
      << ",\"eps\":" << fmt17(eps) << ",\"delta\":" << fmt17(delta);
  if (m) out << ",\"m\":" << *m;
  if (gamma) out << ",\"gamma\":" << fmt17(*gamma);
  out << "}";
  return out.str();
}

Report jackknife_plus_bound(const Inputs& in) {
  check_common(in);
  if (in.n < 2) throw std::invalid_argument("jackknife_plus_bound: n >= 2 required");
  const auto& pr = in.profile;
  const double L = require_L(in, in.n - 1);
  const double c = pr.c(in.n - 1);
  const double nn = static_cast<double>(in.n);
  const double dkw = dkw_threshold_term(in.delta, in.n);
  const double stab =
      2.0 * L * pr.kappa2 * c *
      (1.0 / pr.kappa1 +
       std::sqrt(nn / (2.0 * pr.kappa1 * pr.kappa1) *
                 std::log(2.0 * pr.p / in.eps)));
  return make_report(in, "jackknife_plus",
                     {{"dkw_term", dkw}, {"stability_term", stab}},
                     in.eps + in.delta);
}

Report full_conformal_bound(const Inputs& in) {
  check_common(in);
  if (in.n < 1) throw std::invalid_argument("full_conformal_bound: n >= 1 required");
  const auto& pr = in.profile;
  const double L = require_L(in, in.n);
  const double nn = static_cast<double>(in.n);
  const double dkw = dkw_threshold_term(in.delta, in.n);
  const double stab =
      L * (pr.c(in.n + 1) + std::sqrt(2.0 * nn * std::log(2.0 * pr.p / in.eps)) *
                                pr.kappa2 * pr.c(in.n) / pr.kappa1);
  return make_report(in, "full_conformal",
                     {{"dkw_term", dkw}, {"stability_term", stab}},
                     in.eps + in.delta);
}

Report cv_plus_bound(const Inputs& in) {
  check_common(in);
  const long long m = resolve_fold_size(in);
  if (in.n <= m) throw std::invalid_argument("cv_plus_bound: n > m required");
  const auto& pr = in.profile;
  const double L = require_L(in, in.n - m);
  const double c = pr.c(in.n - m);
  const double nn = static_cast<double>(in.n);
  const double dkw = dkw_threshold_term(in.delta, in.n);
  const double stab =
      2.0 * static_cast<double>(m) * L * pr.kappa2 * c *
      (1.0 / pr.kappa1 +
       std::sqrt(nn / (2.0 * pr.kappa1 * pr.kappa1) *
                 std::log(2.0 * pr.p / in.eps)));
  Inputs echo = in;
  echo.m = m;
  return make_report(echo, "cv_plus",
                     {{"dkw_term", dkw}, {"stability_term", stab}},
                     in.eps + in.delta);
}

double bian_barber_cv_bound(double alpha, long long K, long long m,
                            double delta) {
  if (!(alpha > 0.0) || K < 1 || m < 1 || !(delta > 0.0))
    throw std::invalid_argument("bian_barber_cv_bound: positive inputs required");
  return 2.0 * alpha +
         std::sqrt(2.0 * std::log(static_cast<double>(K) / delta) /
                   static_cast<double>(m));
}

double psi_out_upper(long long m, long long n,
                     const ridge::StabilityProfile& profile) {
  if (m < 0) throw std::invalid_argument("psi_out_upper: m >= 0 required");
  if (n < 1) throw std::invalid_argument("psi_out_upper: n >= 1 required");
  if (!profile.c) throw std::invalid_argument("psi_out_upper: profile.c missing");
  double sum = 0.0;
  for (long long k = n; k < n + m; ++k) sum += profile.c(k + 1) / 2.0;
  return sum;
}

Report liang_barber_bound(const Inputs& in, LiangBarberVariant variant) {
  check_common(in);
  if (!in.gamma || !(*in.gamma > 0.0))
    throw std::invalid_argument("liang_barber_bound: gamma > 0 required");
  if (!in.m || *in.m < 1)
    throw std::invalid_argument("liang_barber_bound: m >= 1 required");
  const long long m = *in.m;
  if (in.n < 2) throw std::invalid_argument("liang_barber_bound: n >= 2 required");

  const double psi_bar = variant == LiangBarberVariant::JackknifePlus
                             ? psi_out_upper(m, in.n - 1, in.profile)
                             : psi_out_upper(m - 1, in.n + 1, in.profile);
  const double cube = std::cbrt(psi_bar / *in.gamma);
  const double mn = static_cast<double>(std::min(m, in.n));
  const double dev = 3.0 * std::sqrt(std::log(1.0 / in.delta) / mn);
  const char* psi_name = variant == LiangBarberVariant::JackknifePlus
                             ? "liang_barber_jplus"
                             : "liang_barber_fc_in";
  return make_report(in, psi_name,
                     {{"martingale_term", dev}, {"psi_term", 2.0 * cube}},
                     3.0 * in.delta + cube);
}

RateTable rate_comparison_table(const std::vector<long long>& n_list,
                                const ridge::StabilityProfile& profile,
                                double alpha, double eps, double delta,
                                double gamma) {
  if (n_list.empty())
    throw std::invalid_argument("rate_comparison_table: empty n list");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    if (n_list[i] <= n_list[i - 1])
      throw std::invalid_argument("rate_comparison_table: n list must increase");

  const auto balanced_m = [](long long n) {
    return static_cast<long long>(
        std::ceil(std::pow(static_cast<double>(n), 0.4)));
  };
  const auto jplus_slack = [&](long long n) {
    Inputs in;
    in.alpha = alpha;
    in.eps = eps;
    in.delta = delta;
    in.n = n;
    in.profile = profile;
    return jackknife_plus_bound(in).slack();
  };
  const auto lb_report = [&](long long n) {
    Inputs in;
    in.alpha = alpha;
    in.eps = eps;
    in.delta = delta;
    in.n = n;
    in.profile = profile;
    in.m = balanced_m(n);
    in.gamma = gamma;
    return liang_barber_bound(in, LiangBarberVariant::JackknifePlus);
  };

  RateTable table;
  table.alpha = alpha;
  table.eps = eps;
  table.delta = delta;
  table.gamma = gamma;
  for (long long n : n_list) {
    Inputs in;
    in.alpha = alpha;
    in.eps = eps;
    in.delta = delta;
    in.n = n;
    in.profile = profile;
    RateRow row;
    row.n = n;
    row.ours_jplus = jackknife_plus_bound(in).slack();
    row.ours_fc = full_conformal_bound(in).slack();
    const Report lb = lb_report(n);
    row.lb_slack = lb.slack();
    row.lb_q = lb.failure_prob;
    table.rows.push_back(row);
  }

  // Locate the smallest n (not restricted to the listed ones) where the
  // jackknife+ slack beats the Liang-Barber slack, by scan + bisection.
  const auto ours_wins = [&](long long n) {
    return jplus_slack(n) < lb_report(n).slack();
  };
  const long long n_min = 2;
  const long long n_max = n_list.back();
  if (ours_wins(n_max)) {
    long long lo = n_min, hi = n_max;  // invariant: wins at hi
    if (ours_wins(n_min)) {
      table.crossover_n = n_min;
    } else {
      while (hi - lo > 1) {
        const long long mid = lo + (hi - lo) / 2;
        if (ours_wins(mid))
          hi = mid;
        else
          lo = mid;
      }
      table.crossover_n = hi;
    }
  }
  return table;
}

std::string RateTable::to_csv() const {
  std::ostringstream out;
  out << "n,ours_jplus,ours_fc,lb_slack,lb_q\n";
  for (const auto& row : rows) {
    out << row.n << "," << fmt17(row.ours_jplus) << "," << fmt17(row.ours_fc)
        << "," << fmt17(row.lb_slack) << "," << fmt17(row.lb_q) << "\n";
  }
  return out.str();
}

namespace {

TailValue finish_tail(double value) {
  return TailValue{value, !(value < 1.0)};
}

void check_profile_for_tails(const ridge::StabilityProfile& profile) {
  if (!profile.c) throw std::invalid_argument("tails: profile.c missing");
  if (profile.p <= 0 || !(profile.kappa1 > 0.0) || !(profile.kappa2 > 0.0))
    throw std::invalid_argument("tails: nonpositive profile constants");
}

}  // namespace

TailValue mcdiarmid_tail(double eps, long long n,
                         const ridge::StabilityProfile& profile) {
  check_profile_for_tails(profile);
  if (eps < 0.0 || n < 1) throw std::invalid_argument("mcdiarmid_tail: bad inputs");
  const double c = profile.c(n);
  const double k1 = profile.kappa1;
  const double expo = -2.0 * k1 * k1 * eps * eps /
                      (static_cast<double>(n) * c * c);
  return finish_tail(2.0 * profile.p * std::exp(expo));
}

TailValue loo_concentration_tail(double eps, long long n,
                                 const ridge::StabilityProfile& profile) {
  check_profile_for_tails(profile);
  if (eps < 0.0 || n < 2)
    throw std::invalid_argument("loo_concentration_tail: bad inputs");
  const double c = profile.c(n - 1);
  const double k1 = profile.kappa1;
  const double k2 = profile.kappa2;
  // Deviation beyond the cluster radius; zero at or below the kink.
  const double dev = std::max(0.0, eps / (k2 * c) - 1.0 / k1);
  const double expo = -2.0 * k1 * k1 / static_cast<double>(n) * dev * dev;
  return finish_tail(2.0 * profile.p * std::exp(expo));
}

TailValue full_model_concentration_tail(double eps, long long n,
                                        const ridge::StabilityProfile& profile) {
  check_profile_for_tails(profile);
  if (eps < 0.0 || n < 1)
    throw std::invalid_argument("full_model_concentration_tail: bad inputs");
  const double c = profile.c(n);
  const double k1 = profile.kappa1;
  const double k2 = profile.kappa2;
  const double expo = -2.0 * k1 * k1 * eps * eps /
                      (static_cast<double>(n) * k2 * k2 * c * c);
  return finish_tail(2.0 * profile.p * std::exp(expo));
}

TailValue dkw_tail(long long n, double dev) {
  if (n < 1 || dev < 0.0) throw std::invalid_argument("dkw_tail: bad inputs");
  return finish_tail(2.0 * std::exp(-2.0 * static_cast<double>(n) * dev * dev));
}

}  // namespace stabconf::bounds
