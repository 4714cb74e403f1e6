#pragma once

#include <vector>

#include "mfg/lipsolve.hpp"

namespace mfg {

// ---------------------------------------------------------------------------
// Change of variables eliminating the additive common noise: a model with
// beta_cn > 0 becomes an extra-variable model whose theta block carries the
// realized common shift s, with coefficients evaluated at the shifted state
// and the shifted (pushforward) measure.  The derived model has beta_cn = 0
// and the shift block diffuses with the base common-noise intensity.
// ---------------------------------------------------------------------------

struct TransformedModel {
  ModelSpec base;
  ModelSpec derived;
  int base_dim_theta = 0;  // leading theta block of the derived model
  int shift_dim = 0;       // trailing shift block (= base.dim_x)
};

// Requires base.beta_cn > 0.  A base model with an endogenous theta (dim > 0)
// is rejected unless allow_theta_concat opts into the concatenated
// (n + d)-dimensional theta block.
TransformedModel transform_model(const ModelSpec& base, bool allow_theta_concat = false);

// Derived-field coordinates of a base evaluation: theta' = [theta_base; 0].
VectorXd lift_theta(const TransformedModel& tm, const VectorXd& theta_base);

// |field(t, y, theta, mu) - field(t, y + s, [theta_base; 0], (id + s)_# mu)|
// where s is the shift block of theta.  Zero for an exactly shift-invariant
// field.
double shift_invariance_residual(const FieldApprox& field_derived, const TransformedModel& tm,
                                 double t, const VectorXd& y, const VectorXd& theta,
                                 const EmpiricalMeasure& mu);

struct EquivalenceReport {
  double residual = 0.0;    // sup-norm relative residual over the probes
  double max_abs = 0.0;     // max absolute two-route difference
  double max_se = 0.0;      // worst MC standard error of the simulation route
  double ref_scale = 0.0;   // max |section value| used as the denominator
  SolveReport solve;        // derived-model solve report
  FieldApprox field;        // the solved derived field, for further probing
};

// Two independent routes to the common-noise solution W_c(t, x, mu):
// (1) fixed_point_solve on the derived model, read on the s = 0 section;
// (2) the Feynman-Kac average along characteristics carrying the actual
// common noise (shared shift on cloud and tagged particle), driven by the
// section field.  Returns the sup-norm relative residual over audit-style
// probe points at time T.  Solver blow-up propagates as BlowUpError.
EquivalenceReport common_noise_equivalence_check(const ModelSpec& base, double T,
                                                 const SimConfig& cfg,
                                                 const PicardOptions& picard = {},
                                                 int n_probes = 8);

struct ShiftSample {
  VectorXd theta;  // shift, dimension d
  EmpiricalMeasure mu, nu;
};

// Max over samples of |flat_deficit(shift-transformed g, mu, nu) -
// flat_deficit(g, (id+theta)_# mu, (id+theta)_# nu)|; the two are the same
// particle sum re-indexed, so the result is zero to float tolerance.
double monotonicity_preservation_check(const ScalarFn& g,
                                       const std::vector<ShiftSample>& samples);

}  // namespace mfg
