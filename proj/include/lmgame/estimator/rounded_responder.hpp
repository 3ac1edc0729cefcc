#pragma once

#include "lmgame/elicitation/allowed_set.hpp"
#include "lmgame/predictors/predictor.hpp"
#include "lmgame/simulation/participant.hpp"

namespace lmgame {

// A model that answers like a player restricted to the allowed checkboxes: its exact
// optimal report, snapped to the nearest allowed value. Only the ratios are rounded; the
// true token's probability is never reported, so there is no "true" rounded perplexity.
inline SimulatedParticipant rounded_model_responder(PredictorPtr model, const AllowedSet& allowed) {
  SimulatedParticipant p;
  p.id = model->name() + "/" + allowed.name();
  p.belief = std::move(model);
  p.allowed = allowed;
  return p;
}

}  // namespace lmgame
