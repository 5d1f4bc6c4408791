#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stabconf/ridge.hpp"

namespace stabconf::bounds {

/// Shared inputs for the training-conditional coverage bounds. eps and delta
/// split the failure probability; m is a fold size (CV+) or augmentation
/// count (Liang-Barber); gamma is the interval inflation there.
struct Inputs {
  double alpha = 0.1;
  double eps = 0.05;
  double delta = 0.05;
  long long n = 0;
  ridge::StabilityProfile profile;
  std::optional<long long> m;
  std::optional<long long> K;
  std::optional<double> gamma;
};

struct Term {
  std::string name;
  double value = 0.0;
};

/// One evaluated bound: P(P_e > threshold) <= failure_prob, with
/// threshold == alpha + sum(terms). Raw values are never clamped; vacuity
/// (threshold >= 1 or failure_prob >= 1) is flagged instead.
struct Report {
  std::string name;
  double alpha = 0.0;
  double threshold = 0.0;
  double failure_prob = 0.0;
  std::vector<Term> terms;
  bool vacuous = false;
  bool certified = false;

  // inputs echo for reports
  long long n = 0;
  double eps = 0.0;
  double delta = 0.0;
  std::optional<long long> m;
  std::optional<double> gamma;

  double slack() const { return threshold - alpha; }
  std::string to_json() const;
};

/// Jackknife+ (Theorem-style bound):
///   t = alpha + sqrt(log(2/delta)/(2n))
///     + 2 L_{n-1} kappa2 c_{n-1} (1/kappa1 + sqrt(n/(2 kappa1^2) log(2p/eps)))
///   q = eps + delta
Report jackknife_plus_bound(const Inputs& in);

/// Full-conformal:
///   t = alpha + sqrt(log(2/delta)/(2n))
///     + L_n (c_{n+1} + sqrt(2n log(2p/eps)) kappa2 c_n / kappa1)
///   q = eps + delta
Report full_conformal_bound(const Inputs& in);

/// K-fold CV+ with m samples per fold:
///   t = alpha + sqrt(log(2/delta)/(2n))
///     + 2 m L_{n-m} kappa2 c_{n-m} (1/kappa1 + sqrt(n/(2 kappa1^2) log(2p/eps)))
///   q = eps + delta
/// m may be given directly or derived as n/K (K must divide n then).
Report cv_plus_bound(const Inputs& in);

/// Bian-Barber K-fold CV+ threshold 2 alpha + sqrt(2 log(K/delta)/m); the
/// failure probability is delta itself.
double bian_barber_cv_bound(double alpha, long long K, long long m, double delta);

/// Chained upper bound on the (m,n)-out-stability:
///   psi_{m,n} <= sum_{k=n}^{n+m-1} c_{k+1}/2.   m = 0 gives 0.
double psi_out_upper(long long m, long long n,
                     const ridge::StabilityProfile& profile);

enum class LiangBarberVariant {
  JackknifePlus,    // psi_bar = psi_out_upper(m, n-1)
  FullConformalIn,  // psi_bar = psi_out_upper(m-1, n+1)
};

/// Gamma-inflated bound of Liang-Barber, with the stability parameter
/// replaced by its uniform-stability chaining upper bound:
///   t = alpha + 3 sqrt(log(1/delta)/min(m,n)) + 2 (psi_bar/gamma)^(1/3)
///   q = 3 delta + (psi_bar/gamma)^(1/3)
Report liang_barber_bound(const Inputs& in,
                          LiangBarberVariant variant = LiangBarberVariant::JackknifePlus);

struct RateRow {
  long long n = 0;
  double ours_jplus = 0.0;  // jackknife+ threshold slack (t - alpha)
  double ours_fc = 0.0;     // full-conformal slack
  double lb_slack = 0.0;    // Liang-Barber slack at m = ceil(n^(2/5))
  double lb_q = 0.0;        // Liang-Barber failure probability
};

struct RateTable {
  std::vector<RateRow> rows;
  /// Smallest n where the jackknife+ slack drops below the Liang-Barber
  /// slack (located by bisection; not limited to the listed n).
  std::optional<long long> crossover_n;
  double alpha = 0.0, eps = 0.0, delta = 0.0, gamma = 0.0;

  std::string to_csv() const;  // header: n,ours_jplus,ours_fc,lb_slack,lb_q
};

RateTable rate_comparison_table(const std::vector<long long>& n_list,
                                const ridge::StabilityProfile& profile,
                                double alpha, double eps, double delta,
                                double gamma);

/// A raw tail probability; vacuous when >= 1.
struct TailValue {
  double value = 0.0;
  bool vacuous = false;
};

/// McDiarmid parameter-vector tail: 2p exp(-2 kappa1^2 eps^2 / (n c_n^2)).
TailValue mcdiarmid_tail(double eps, long long n,
                         const ridge::StabilityProfile& profile);

/// LOO model cluster tail:
///   2p exp(-(2 kappa1^2 / n) (eps/(kappa2 c_{n-1}) - 1/kappa1)^2),
/// valid beyond the kink eps > kappa2 c_{n-1} / kappa1 (vacuous below it;
/// the deviation term is floored at the kink).
TailValue loo_concentration_tail(double eps, long long n,
                                 const ridge::StabilityProfile& profile);

/// Full-model tail: 2p exp(-2 kappa1^2 eps^2 / (n kappa2^2 c_n^2)).
TailValue full_model_concentration_tail(double eps, long long n,
                                        const ridge::StabilityProfile& profile);

/// Dvoretzky-Kiefer-Wolfowitz: 2 exp(-2 n dev^2).
TailValue dkw_tail(long long n, double dev);

}  // namespace stabconf::bounds
