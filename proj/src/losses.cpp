#include "tggat/losses.hpp"

namespace tggat::loss {

Matrix Box::row() const {
  Matrix m(1, 4);
  m << x, y, w, h;
  return m;
}

namespace {

void require_box_row(const Var& v, const char* op) {
  if (v.rows() != 1 || v.cols() != 4) throw ShapeError(std::string(op) + ": predicted box must be 1x4");
}

Var column(const Var& v, nx::Index c) { return nx::slice_cols(v, c, 1); }

}  // namespace

Var smooth_l1(const Var& predicted, const Box& target) {
  require_box_row(predicted, "smooth_l1");
  return nx::mean(nx::huber(nx::add_const(predicted, -target.row()), kSmoothL1Beta));
}

Var giou_loss(const Var& predicted, const Box& target) {
  require_box_row(predicted, "giou_loss");
  if (!(target.w > 0.0 && target.h > 0.0)) throw DomainError("giou_loss: target box has zero area");
  const Matrix& pv = predicted.value();
  if (!(pv(0, 2) > 0.0 && pv(0, 3) > 0.0)) throw DomainError("giou_loss: predicted box has zero area");

  const Var px = column(predicted, 0), py = column(predicted, 1);
  const Var pw = column(predicted, 2), ph = column(predicted, 3);
  const Var px1 = px - 0.5 * pw, px2 = px + 0.5 * pw;
  const Var py1 = py - 0.5 * ph, py2 = py + 0.5 * ph;

  auto c = [](double v) { return Var::scalar(v); };
  const Var tx1 = c(target.x - 0.5 * target.w), tx2 = c(target.x + 0.5 * target.w);
  const Var ty1 = c(target.y - 0.5 * target.h), ty2 = c(target.y + 0.5 * target.h);

  const Var iw = nx::relu(nx::minimum(px2, tx2) - nx::maximum(px1, tx1));
  const Var ih = nx::relu(nx::minimum(py2, ty2) - nx::maximum(py1, ty1));
  const Var inter = nx::mul(iw, ih);
  const Var uni = nx::add_scalar(nx::mul(pw, ph), target.area()) - inter;
  const Var cw = nx::maximum(px2, tx2) - nx::minimum(px1, tx1);
  const Var ch = nx::maximum(py2, ty2) - nx::minimum(py1, ty1);
  const Var enclosing = nx::mul(cw, ch);
  const Var iou = nx::div(inter, uni);
  const Var giou = iou - nx::div(enclosing - uni, enclosing);
  return nx::add_scalar(-giou, 1.0);
}

Var bce(const Var& probability, double label) {
  const Var p = nx::clamp(probability, kBceClamp, 1.0 - kBceClamp);
  const Var pos = nx::scale(nx::log(p), -label);
  const Var neg = nx::scale(nx::log(nx::add_scalar(-p, 1.0)), -(1.0 - label));
  return nx::mean(pos + neg);
}

GroundingLoss grounding_loss(const gat::GroundingPrediction& pred, const GroundingTarget& target,
                             const LossWeights& w) {
  GroundingLoss out;
  out.bce = bce(pred.confidence, static_cast<double>(target.c));
  out.total = nx::scale(out.bce, w.kappa3);
  if (target.c == 1) {
    out.l1 = smooth_l1(pred.box, target.box);
    out.giou = giou_loss(pred.box, target.box);
    out.total = nx::scale(out.l1, w.kappa1) + nx::scale(out.giou, w.kappa2) + out.total;
  } else {
    out.l1 = Var::scalar(0.0);
    out.giou = Var::scalar(0.0);
  }
  return out;
}

Var nav_loss(const gat::ActionPrediction& pred, const geo::Action& oracle, double max_step) {
  if (!(max_step > 0.0)) throw DomainError("nav_loss: max_step must be positive");
  Matrix target(1, 3);
  target << oracle.dx / max_step, oracle.dy / max_step, oracle.dz / max_step;
  const Var normalized = nx::scale(pred.displacement, 1.0 / max_step);
  const Var mse = nx::mean(nx::square(nx::add_const(normalized, -target)));
  return mse + bce(pred.stop_prob, oracle.stop ? 1.0 : 0.0);
}

Var hap_loss(const gat::AttentionMapPrediction& pred, const Matrix& mask) {
  if (pred.probs.rows() != mask.rows() || pred.probs.cols() != mask.cols()) {
    throw ShapeError("hap_loss: mask shape does not match prediction");
  }
  const Var p = nx::clamp(pred.probs, kBceClamp, 1.0 - kBceClamp);
  const Matrix inv = Matrix::Ones(mask.rows(), mask.cols()) - mask;
  const Var pos = nx::mul(nx::log(p), Var::constant(mask));
  const Var neg = nx::mul(nx::log(nx::add_scalar(-p, 1.0)), Var::constant(inv));
  return -nx::mean(pos + neg);
}

Var total_loss(const Var& nav, const Var& hap, const Var& gr, const LossWeights& w) {
  return nx::scale(nav, w.lambda1) + nx::scale(hap, w.lambda2) + nx::scale(gr, w.lambda3);
}

}  // namespace tggat::loss
