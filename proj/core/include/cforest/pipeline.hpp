#pragma once

#include <filesystem>

#include "cforest/cascade.hpp"
#include "cforest/dataset.hpp"
#include "cforest/scheduler.hpp"

namespace cforest {

struct PipelineResult {
  CascadeModel model;
  RunReport report;
};

/// Cascade training run as a checkpointed job graph: per layer, fold_prep
/// writes the fold's row lists, train fits one (learner, fold) model,
/// predict scores the held-out fold, combine assembles the out-of-fold class
/// vectors, and evaluate_gate scores the layer and appends the next layer's
/// subgraph until the stop rule fires.
///
/// Completed nodes recorded under checkpoint_dir are verified and skipped, so
/// an interrupted run picks up where it stopped; the finished model is
/// identical to train_cascade(ds, config) either way.
PipelineResult train_cascade_checkpointed(const Dataset& ds, const CascadeConfig& config,
                                          const std::filesystem::path& checkpoint_dir,
                                          int pool_size);

}  // namespace cforest
