#pragma once

#include <array>
#include <span>
#include <vector>

#include "dpf/geometry.hpp"
#include "dpf/ops.hpp"

namespace dpf::supervision {

/// Relative reflectance judgement J for a pair (k1, k2).
enum class Relation { darker1, darker2, equal };

const char* relation_name(Relation r) noexcept;

struct PointLabel {
  int row = 0;
  int col = 0;
  int label = 0;
};

/// Endpoints use the [0, 1]^2 convention (x along columns, y along rows).
struct ComparisonPair {
  double x1 = 0.5, y1 = 0.5;
  double x2 = 0.5, y2 = 0.5;
  Relation relation = Relation::equal;
  double weight = 1.0;

  geometry::NormCoord p1() const;
  geometry::NormCoord p2() const;
};

/// Maps [0, 1] onto (-1, 1); the closed ends are pulled just inside.
geometry::NormCoord unit_to_norm(double x, double y);

struct HingeMargins {
  double delta = 0.12;
  double eps = 0.08;
};

/// Pairwise SVM hinge on the ratio r = R1 / R2.
double hinge_pair_loss(double r1, double r2, Relation j, HingeMargins m = {});

/// dL/dr for the same branches (subgradient 0 at kinks).
double hinge_pair_slope(double ratio, Relation j, HingeMargins m = {});

/// darker1 if R2/R1 > 1+delta, darker2 if R1/R2 > 1+delta, equal otherwise.
Relation classify_pair(double r1, double r2, double delta = 0.1);

struct WhdrReport {
  double whdr = 0.0;
  std::array<std::size_t, 3> errors{};     // indexed by ground-truth Relation
  std::array<double, 3> error_weight{};
  double total_weight = 0.0;
};

/// sum s_k [pred_k != J_k] / sum s_k
WhdrReport whdr(std::span<const Relation> truth, std::span<const double> weights, std::span<const Relation> predicted);

/// Classifies each (r1[k], r2[k]) and scores against the pairs' labels.
WhdrReport whdr(std::span<const ComparisonPair> pairs, std::span<const double> r1, std::span<const double> r2,
                double delta = 0.1);

/// Mean over rows of -log softmax(logits)[label]; logits is [N, c].
double ce_point_loss(const nn::BasicTensor<double>& logits, std::span<const int> labels);

/// Unnormalized sum_k s_k * L_k.
double pair_loss_total(std::span<const ComparisonPair> pairs, std::span<const double> r1, std::span<const double> r2,
                       HingeMargins m = {});

double total_loss(double field_loss, double aux_loss, double lambda_aux = 1.0);

struct MiouReport {
  double miou = 0.0;
  std::vector<double> per_class;  // NaN for classes absent from both maps
  std::size_t classes_present = 0;
};

/// Accumulates intersections and unions over any number of label maps.
class IouAccumulator {
 public:
  IouAccumulator(int classes, int ignore_value);

  void add(std::span<const int> pred, std::span<const int> gt);
  MiouReport report() const;
  std::size_t valid_pixels() const noexcept { return valid_; }

 private:
  int classes_;
  int ignore_;
  std::vector<std::size_t> inter_;
  std::vector<std::size_t> uni_;
  std::size_t valid_ = 0;
};

MiouReport miou(std::span<const int> pred, std::span<const int> gt, int classes, int ignore_value = 255);

// Tape versions used in training.

/// r1, r2 are [N, 1] strictly positive reflectances at the pair endpoints.
template <class T>
nn::Var<T> pair_hinge_loss(nn::Var<T> r1, nn::Var<T> r2, std::span<const ComparisonPair> pairs, HingeMargins m = {});

template <class T>
nn::Var<T> point_ce_loss(nn::Var<T> logits, std::span<const PointLabel> points);

template <class T>
nn::Var<T> total_loss(nn::Var<T> field_loss, nn::Var<T> aux_loss, double lambda_aux);

}  // namespace dpf::supervision
