#include "svit/losses.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "svit/errors.hpp"

namespace svit {

void LossWeights::validate() const {
  for (double w : {lambda_con, lambda_haog, lambda_vid})
    if (!std::isfinite(w) || w < 0) throw ConfigError("loss weights must be finite and non-negative");
}

double loss_total(double l_con, double l_haog, double l_vid, const LossWeights& w) {
  return w.lambda_con * l_con + w.lambda_haog * l_haog + w.lambda_vid * l_vid;
}

void finalize_total(LossBreakdown& b, const LossWeights& w) { b.l_total = loss_total(b.l_con, b.l_haog, b.l_vid, w); }

ad::Var loss_video(ad::Var frame_logits, std::size_t pnr_target, ad::Var osc_logit, bool osc_label) {
  const std::size_t t = frame_logits.rows();
  if (frame_logits.cols() != 1 || t == 0) throw ArgumentError("loss_video: expected a T x 1 logit column");
  ad::Var osc = ad::bce_with_logits(osc_logit, Matrix::scalar(osc_label ? 1.0 : 0.0));
  if (!osc_label) return osc;
  if (pnr_target >= t) throw ArgumentError("loss_video: PNR target " + std::to_string(pnr_target) + " outside [0, T)");
  Matrix target(t, 1);
  target(pnr_target, 0) = 1.0;
  ad::Var frames = ad::mean_all(ad::bce_with_logits(frame_logits, target));
  return ad::add(frames, osc);
}

ad::Var corners_from_center(ad::Var box_params) {
  ad::Var cx = ad::slice_cols(box_params, 0, 1);
  ad::Var cy = ad::slice_cols(box_params, 1, 1);
  ad::Var hw = ad::scale(ad::slice_cols(box_params, 2, 1), 0.5);
  ad::Var hh = ad::scale(ad::slice_cols(box_params, 3, 1), 0.5);
  const ad::Var parts[4] = {ad::clamp(ad::sub(cx, hw), 0.0, 1.0), ad::clamp(ad::sub(cy, hh), 0.0, 1.0),
                            ad::clamp(ad::add(cx, hw), 0.0, 1.0), ad::clamp(ad::add(cy, hh), 0.0, 1.0)};
  return ad::concat_cols(parts);
}

ad::Var giou_rows(ad::Var pred, const Matrix& gt) {
  ad::Tape& tape = *pred.tape();
  if (pred.cols() != 4 || !pred.value().same_shape(gt)) throw ArgumentError("giou_rows: expected matching k x 4 boxes");
  const std::size_t k = gt.rows;
  auto col = [&](std::size_t c) {
    Matrix m(k, 1);
    for (std::size_t i = 0; i < k; ++i) m(i, 0) = gt(i, c);
    return tape.constant(std::move(m));
  };
  ad::Var px1 = ad::slice_cols(pred, 0, 1), py1 = ad::slice_cols(pred, 1, 1);
  ad::Var px2 = ad::slice_cols(pred, 2, 1), py2 = ad::slice_cols(pred, 3, 1);
  ad::Var gx1 = col(0), gy1 = col(1), gx2 = col(2), gy2 = col(3);

  ad::Var iw = ad::relu(ad::sub(ad::minimum(px2, gx2), ad::maximum(px1, gx1)));
  ad::Var ih = ad::relu(ad::sub(ad::minimum(py2, gy2), ad::maximum(py1, gy1)));
  ad::Var inter = ad::mul(iw, ih);
  ad::Var area_p = ad::mul(ad::sub(px2, px1), ad::sub(py2, py1));
  ad::Var area_g = ad::mul(ad::sub(gx2, gx1), ad::sub(gy2, gy1));
  ad::Var uni = ad::sub(ad::add(area_p, area_g), inter);
  ad::Var hull = ad::mul(ad::sub(ad::maximum(px2, gx2), ad::minimum(px1, gx1)),
                         ad::sub(ad::maximum(py2, gy2), ad::minimum(py1, gy1)));

  // Rows with a degenerate hull or union are defined as 0; substitute 1 in
  // the denominators and mask the result.
  Matrix ok(k, 1), fix(k, 1);
  for (std::size_t i = 0; i < k; ++i) {
    const bool good = hull.value()(i, 0) > 0 && uni.value()(i, 0) > 0;
    ok(i, 0) = good ? 1.0 : 0.0;
    fix(i, 0) = good ? 0.0 : 1.0;
  }
  ad::Var okv = tape.constant(ok);
  ad::Var fixv = tape.constant(fix);
  ad::Var safe_uni = ad::add(ad::mul(uni, okv), fixv);
  ad::Var safe_hull = ad::add(ad::mul(hull, okv), fixv);
  ad::Var g = ad::sub(ad::div(inter, safe_uni), ad::div(ad::sub(safe_hull, safe_uni), safe_hull));
  return ad::mul(g, okv);
}

HaogLossVars loss_haog(const HaogHeadOutput& pred, const Haog& gt) {
  ad::Tape& tape = *pred.box_params.tape();
  if (const auto v = validate_haog(gt); !v.empty()) throw ArgumentError("loss_haog: invalid ground truth: " + v.front());

  HaogLossVars out;
  std::vector<std::size_t> present;
  for (std::size_t j = 0; j < kHaogNodes; ++j)
    if (gt.exists[j]) present.push_back(j);

  if (present.empty()) {
    out.box_giou = tape.constant(Matrix::scalar(0.0));
    out.box_l1 = tape.constant(Matrix::scalar(0.0));
  } else {
    Matrix gt_corners(present.size(), 4);
    for (std::size_t r = 0; r < present.size(); ++r) {
      const BoundingBox& b = *gt.boxes[present[r]];
      gt_corners(r, 0) = b.x1;
      gt_corners(r, 1) = b.y1;
      gt_corners(r, 2) = b.x2;
      gt_corners(r, 3) = b.y2;
    }
    ad::Var corners = corners_from_center(ad::gather_rows(pred.box_params, present));
    ad::Var g = giou_rows(corners, gt_corners);
    out.box_giou = ad::mean_all(ad::scale(ad::add_scalar(g, -1.0), -1.0));
    ad::Var diff = ad::abs(ad::sub(corners, tape.constant(gt_corners)));
    out.box_l1 = ad::scale(ad::sum_all(diff), 1.0 / static_cast<double>(present.size()));
  }

  Matrix exist_target(kHaogNodes, 1);
  for (std::size_t j = 0; j < kHaogNodes; ++j) exist_target(j, 0) = gt.exists[j] ? 1.0 : 0.0;
  out.existence = ad::mean_all(ad::bce_with_logits(pred.exist_logits, exist_target));

  std::vector<std::size_t> edges, labels;
  for (std::size_t k = 0; k < kHaogEdges; ++k)
    if (gt.contact_defined(k)) {
      edges.push_back(k);
      labels.push_back(gt.contact[k] ? 1 : 0);
    }
  if (edges.empty()) {
    out.contact = tape.constant(Matrix::scalar(0.0));
  } else {
    out.contact = ad::mean_all(ad::cross_entropy_rows(ad::gather_rows(pred.contact_logits, edges), labels));
  }

  out.total = ad::add(ad::add(ad::add(out.box_giou, out.box_l1), out.existence), out.contact);
  return out;
}

ad::Var loss_consistency(const BoundParams& p, ad::Var clip_object_tokens, ad::Var frame_object_tokens) {
  if (!clip_object_tokens.value().same_shape(frame_object_tokens.value()))
    throw ArgumentError("loss_consistency: clip and frame token shapes differ");
  ad::Var projected = consistency_projection(p, clip_object_tokens);
  return ad::mean_all(ad::abs(ad::sub(projected, frame_object_tokens)));
}

HaogHeadOutput constant_prediction(ad::Tape& tape, const HaogPrediction& pred) {
  Matrix boxes(kHaogNodes, 4), exist(kHaogNodes, 1), contact(kHaogEdges, 2);
  for (std::size_t j = 0; j < kHaogNodes; ++j) {
    for (std::size_t c = 0; c < 4; ++c) boxes(j, c) = pred.box_params[j][c];
    exist(j, 0) = pred.exist_logits[j];
  }
  for (std::size_t k = 0; k < kHaogEdges; ++k)
    for (std::size_t c = 0; c < 2; ++c) contact(k, c) = pred.contact_logits[k][c];
  return {tape.constant(std::move(boxes)), tape.constant(std::move(exist)), tape.constant(std::move(contact))};
}

}  // namespace svit
