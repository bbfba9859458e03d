#pragma once

#include <cstddef>

#include "svit/autodiff.hpp"
#include "svit/haog.hpp"
#include "svit/model.hpp"

namespace svit {

struct LossWeights {
  double lambda_con = 10.0;
  double lambda_haog = 5.0;
  double lambda_vid = 1.0;

  void validate() const;
};

struct HaogLossTerms {
  double box_giou = 0.0;  // mean over existing slots of 1 - GIoU
  double box_l1 = 0.0;    // mean over existing slots of the corner L1 sum
  double existence = 0.0;
  double contact = 0.0;
};

struct LossBreakdown {
  double l_vid = 0.0;
  double l_haog = 0.0;
  HaogLossTerms haog;
  double l_con = 0.0;
  double l_total = 0.0;
};

/// lambda_con * l_con + lambda_haog * l_haog + lambda_vid * l_vid.
double loss_total(double l_con, double l_haog, double l_vid, const LossWeights& w);
/// Fills breakdown.l_total from its terms.
void finalize_total(LossBreakdown& breakdown, const LossWeights& w);

/// Frame term: mean BCE of each frame logit against a one-hot target at
/// `pnr_target` (skipped when osc_label is false); plus BCE of the OSC logit.
ad::Var loss_video(ad::Var frame_logits, std::size_t pnr_target, ad::Var osc_logit, bool osc_label);

struct HaogLossVars {
  ad::Var total;
  ad::Var box_giou;
  ad::Var box_l1;
  ad::Var existence;
  ad::Var contact;
};

/// Box terms over slots that exist in `gt`, existence BCE over all four slots,
/// contact cross-entropy over edges whose endpoints both exist. Empty groups
/// contribute 0.
HaogLossVars loss_haog(const HaogHeadOutput& pred, const Haog& gt);

/// Mean |FC(clip token) - frame token| over every entry. Both token sets are
/// (T*n) x d in (frame, slot) row order.
ad::Var loss_consistency(const BoundParams& p, ad::Var clip_object_tokens, ad::Var frame_object_tokens);

/// Differentiable GIoU between rows of predicted corners (k x 4) and constant
/// ground-truth corners (k x 4); returns k x 1.
ad::Var giou_rows(ad::Var pred_corners, const Matrix& gt_corners);
/// (cx, cy, w, h) rows to clipped corner rows.
ad::Var corners_from_center(ad::Var box_params);

/// Places a plain prediction on a tape as constants.
HaogHeadOutput constant_prediction(ad::Tape& tape, const HaogPrediction& pred);

}  // namespace svit
