#pragma once

#include <string>
#include <vector>

#include "mpa/codec.hpp"
#include "mpa/taskmodels.hpp"
#include "mpa/toydata.hpp"

// Rate-distortion / task-metric sweeps over a dataset directory: every image
// is coded through the full container path at each (q, alpha) grid point.

namespace mpa {

struct EvalOptions {
  std::vector<double> q_grid{1.0, 4.0, 8.0};
  std::vector<double> alpha_grid{0.0};
  Task task = Task::mse;
};

struct EvalRow {
  std::string image;
  double q = 0, alpha = 0;
  Task task = Task::mse;
  double bpp_estimated = 0, bpp_actual = 0;
  double psnr = 0, proxy_perc = 0;
  double task_metric = 0;  // PSNR / top-1 hit / per-image mean IoU by task
};

// tasknet may be null for the mse task; cls/seg require it and labels.
std::vector<EvalRow> evaluate_grid(CodecModel<float>& model,
                                   const std::vector<ToySample>& samples,
                                   const EvalOptions& opts, const TaskNet<float>* tasknet);

std::string eval_report_csv(const std::vector<EvalRow>& rows);

}  // namespace mpa
