#pragma once

#include "semidrd/contrastive/dual_contrastive.hpp"
#include "semidrd/contrastive/memory_bank.hpp"
#include "semidrd/core/errors.hpp"
#include "semidrd/core/graph.hpp"
#include "semidrd/core/ops.hpp"
#include "semidrd/core/rng.hpp"
#include "semidrd/core/tensor.hpp"
#include "semidrd/data/batch_stream.hpp"
#include "semidrd/data/dataset.hpp"
#include "semidrd/data/image_io.hpp"
#include "semidrd/data/synth.hpp"
#include "semidrd/eval/metrics.hpp"
#include "semidrd/eval/pipeline.hpp"
#include "semidrd/nn/detail_repair_net.hpp"
#include "semidrd/nn/layers.hpp"
#include "semidrd/nn/perceptual_encoder.hpp"
#include "semidrd/nn/rain_residual_net.hpp"
#include "semidrd/train/adam.hpp"
#include "semidrd/train/checkpoint.hpp"
#include "semidrd/train/config.hpp"
#include "semidrd/train/losses.hpp"
#include "semidrd/train/models.hpp"
#include "semidrd/train/schedule.hpp"
#include "semidrd/train/trainer.hpp"
