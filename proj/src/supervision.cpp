#include "dpf/supervision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace dpf::supervision {

const char* relation_name(Relation r) noexcept {
  switch (r) {
    case Relation::darker1: return "1";
    case Relation::darker2: return "2";
    case Relation::equal: return "E";
  }
  return "?";
}

geometry::NormCoord unit_to_norm(double x, double y) {
  require(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0, "unit_to_norm: coordinate outside [0, 1]");
  constexpr double kEdge = 1.0 - 1e-9;
  return {std::clamp(2.0 * x - 1.0, -kEdge, kEdge), std::clamp(2.0 * y - 1.0, -kEdge, kEdge)};
}

geometry::NormCoord ComparisonPair::p1() const { return unit_to_norm(x1, y1); }
geometry::NormCoord ComparisonPair::p2() const { return unit_to_norm(x2, y2); }

namespace {

void require_positive(double r1, double r2, const char* op) {
  if (!(r1 > 0.0) || !(r2 > 0.0)) {
    throw ContractError(std::string(op) + ": reflectances must be strictly positive, got " + std::to_string(r1) +
                        ", " + std::to_string(r2));
  }
}

// Active piece of the hinge: 0 = inactive, otherwise the slope sign.
int hinge_piece(double ratio, Relation j, HingeMargins m) {
  switch (j) {
    case Relation::darker1: return ratio - 1.0 / (1.0 + m.delta + m.eps) > 0.0 ? 1 : 0;
    case Relation::darker2: return (1.0 + m.delta + m.eps) - ratio > 0.0 ? -1 : 0;
    case Relation::equal:
      if (1.0 / (1.0 + m.delta - m.eps) - ratio > 0.0) return -1;
      if (ratio - (1.0 + m.delta - m.eps) > 0.0) return 1;
      return 0;
  }
  return 0;
}

double hinge_of_ratio(double ratio, Relation j, HingeMargins m) {
  switch (j) {
    case Relation::darker1: return std::max(0.0, ratio - 1.0 / (1.0 + m.delta + m.eps));
    case Relation::darker2: return std::max(0.0, 1.0 + m.delta + m.eps - ratio);
    case Relation::equal:
      return std::max({0.0, 1.0 / (1.0 + m.delta - m.eps) - ratio, ratio - (1.0 + m.delta - m.eps)});
  }
  return 0.0;
}

}  // namespace

double hinge_pair_loss(double r1, double r2, Relation j, HingeMargins m) {
  require_positive(r1, r2, "hinge_pair_loss");
  return hinge_of_ratio(r1 / r2, j, m);
}

double hinge_pair_slope(double ratio, Relation j, HingeMargins m) { return hinge_piece(ratio, j, m); }

Relation classify_pair(double r1, double r2, double delta) {
  require_positive(r1, r2, "classify_pair");
  const double thr = 1.0 + delta;
  if (r2 / r1 > thr) return Relation::darker1;
  if (r1 / r2 > thr) return Relation::darker2;
  return Relation::equal;
}

WhdrReport whdr(std::span<const Relation> truth, std::span<const double> weights, std::span<const Relation> predicted) {
  require(truth.size() == weights.size() && truth.size() == predicted.size(), "whdr: input lengths differ");
  require(!truth.empty(), "whdr: empty pair set");
  WhdrReport rep;
  double wrong = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    require(std::isfinite(weights[k]) && weights[k] >= 0.0, "whdr: weights must be finite and non-negative");
    rep.total_weight += weights[k];
    if (predicted[k] != truth[k]) {
      const auto t = static_cast<std::size_t>(truth[k]);
      rep.errors[t] += 1;
      rep.error_weight[t] += weights[k];
      wrong += weights[k];
    }
  }
  require(rep.total_weight > 0.0, "whdr: total weight is zero");
  rep.whdr = wrong / rep.total_weight;
  return rep;
}

WhdrReport whdr(std::span<const ComparisonPair> pairs, std::span<const double> r1, std::span<const double> r2,
                double delta) {
  require(pairs.size() == r1.size() && pairs.size() == r2.size(), "whdr: one reflectance pair per comparison");
  std::vector<Relation> truth, pred;
  std::vector<double> w;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    truth.push_back(pairs[k].relation);
    w.push_back(pairs[k].weight);
    pred.push_back(classify_pair(r1[k], r2[k], delta));
  }
  return whdr(truth, w, pred);
}

double ce_point_loss(const nn::BasicTensor<double>& logits, std::span<const int> labels) {
  require(logits.rank() == 2 && logits.dim(0) == labels.size(), "ce_point_loss: one logit row per label");
  const std::size_t c = logits.dim(1);
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= c) {
      throw ContractError("ce_point_loss: label " + std::to_string(labels[r]) + " outside [0, " +
                          std::to_string(c) + ")");
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, logits.at(r, j));
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits.at(r, j) - mx);
    total += std::log(z) + mx - logits.at(r, static_cast<std::size_t>(labels[r]));
  }
  return labels.empty() ? 0.0 : total / static_cast<double>(labels.size());
}

double pair_loss_total(std::span<const ComparisonPair> pairs, std::span<const double> r1, std::span<const double> r2,
                       HingeMargins m) {
  require(pairs.size() == r1.size() && pairs.size() == r2.size(), "pair_loss_total: one reflectance pair per comparison");
  double total = 0.0;
  for (std::size_t k = 0; k < pairs.size(); ++k) total += pairs[k].weight * hinge_pair_loss(r1[k], r2[k], pairs[k].relation, m);
  return total;
}

double total_loss(double field_loss, double aux_loss, double lambda_aux) {
  require(std::isfinite(field_loss) && std::isfinite(aux_loss), "total_loss: losses must be finite");
  return field_loss + lambda_aux * aux_loss;
}

IouAccumulator::IouAccumulator(int classes, int ignore_value)
    : classes_(classes), ignore_(ignore_value), inter_(static_cast<std::size_t>(classes)), uni_(static_cast<std::size_t>(classes)) {
  require(classes >= 1, "IouAccumulator: need at least one class");
}

void IouAccumulator::add(std::span<const int> pred, std::span<const int> gt) {
  require(pred.size() == gt.size(), "miou: prediction and ground truth differ in size");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == ignore_ || pred[i] == ignore_) continue;
    require(gt[i] >= 0 && gt[i] < classes_ && pred[i] >= 0 && pred[i] < classes_, "miou: label outside [0, c)");
    ++valid_;
    const auto g = static_cast<std::size_t>(gt[i]);
    const auto p = static_cast<std::size_t>(pred[i]);
    if (g == p) {
      ++inter_[g];
      ++uni_[g];
    } else {
      ++uni_[g];
      ++uni_[p];
    }
  }
}

MiouReport IouAccumulator::report() const {
  require(valid_ > 0, "miou: no valid pixels");
  MiouReport rep;
  rep.per_class.assign(static_cast<std::size_t>(classes_), std::numeric_limits<double>::quiet_NaN());
  double acc = 0.0;
  for (std::size_t c = 0; c < uni_.size(); ++c) {
    if (uni_[c] == 0) continue;
    rep.per_class[c] = static_cast<double>(inter_[c]) / static_cast<double>(uni_[c]);
    acc += rep.per_class[c];
    ++rep.classes_present;
  }
  rep.miou = acc / static_cast<double>(rep.classes_present);
  return rep;
}

MiouReport miou(std::span<const int> pred, std::span<const int> gt, int classes, int ignore_value) {
  IouAccumulator acc(classes, ignore_value);
  acc.add(pred, gt);
  return acc.report();
}

template <class T>
nn::Var<T> pair_hinge_loss(nn::Var<T> r1, nn::Var<T> r2, std::span<const ComparisonPair> pairs, HingeMargins m) {
  const std::size_t n = pairs.size();
  require(r1.shape() == nn::Shape({n, 1}) && r2.shape() == nn::Shape({n, 1}),
          "pair_hinge_loss: endpoint reflectances must be [N, 1]");
  const auto& a = r1.value();
  const auto& b = r2.value();
  nn::Tape<T>& tape = *r1.tape;
  auto slopes = std::make_shared<std::vector<double>>(n);
  double total = 0.0;
  std::uint64_t pieces = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double ra = static_cast<double>(a[k]);
    const double rb = static_cast<double>(b[k]);
    require_positive(ra, rb, "pair_hinge_loss");
    const double ratio = ra / rb;
    total += pairs[k].weight * hinge_of_ratio(ratio, pairs[k].relation, m);
    const int piece = hinge_piece(ratio, pairs[k].relation, m);
    (*slopes)[k] = pairs[k].weight * piece;
    pieces = (pieces * 3 + static_cast<std::uint64_t>(piece + 1)) * 0x100000001b3ULL;
  }
  if (tape.branch_tracking()) tape.note_branch(pieces);
  return tape.record(nn::BasicTensor<T>::scalar(static_cast<T>(total)), {r1, r2},
                     [r1, r2, slopes, n](nn::Tape<T>& tape, const nn::BasicTensor<T>& g) {
                       const auto& a = tape.value(r1);
                       const auto& b = tape.value(r2);
                       auto* ga = tape.grad_slot(r1);
                       auto* gb = tape.grad_slot(r2);
                       for (std::size_t k = 0; k < n; ++k) {
                         const T s = static_cast<T>((*slopes)[k]) * g[0];
                         if (s == T(0)) continue;
                         // d(R1/R2)/dR1 = 1/R2, d(R1/R2)/dR2 = -R1/R2^2
                         if (ga) (*ga)[k] += s / b[k];
                         if (gb) (*gb)[k] -= s * a[k] / (b[k] * b[k]);
                       }
                     });
}

template <class T>
nn::Var<T> point_ce_loss(nn::Var<T> logits, std::span<const PointLabel> points) {
  std::vector<int> labels;
  labels.reserve(points.size());
  for (const auto& p : points) labels.push_back(p.label);
  return nn::cross_entropy(logits, labels);
}

template <class T>
nn::Var<T> total_loss(nn::Var<T> field_loss, nn::Var<T> aux_loss, double lambda_aux) {
  return nn::add(field_loss, nn::scale(aux_loss, static_cast<T>(lambda_aux)));
}

template nn::Var<float> pair_hinge_loss(nn::Var<float>, nn::Var<float>, std::span<const ComparisonPair>, HingeMargins);
template nn::Var<double> pair_hinge_loss(nn::Var<double>, nn::Var<double>, std::span<const ComparisonPair>, HingeMargins);
template nn::Var<float> point_ce_loss(nn::Var<float>, std::span<const PointLabel>);
template nn::Var<double> point_ce_loss(nn::Var<double>, std::span<const PointLabel>);
template nn::Var<float> total_loss(nn::Var<float>, nn::Var<float>, double);
template nn::Var<double> total_loss(nn::Var<double>, nn::Var<double>, double);

}  // namespace dpf::supervision
