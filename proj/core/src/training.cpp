#include "mpa/training.hpp"

#include <cstdio>
#include <fstream>

namespace mpa {

std::string metrics_csv(const std::vector<TrainMetricsRow>& rows) {
  std::string out = "step,bpp,mse,proxy_perc,ratio_loss,task_metric\n";
  char line[192];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%ld,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.step, r.bpp, r.mse,
                  r.proxy_perc, r.ratio_loss, r.task_metric);
    out += line;
  }
  return out;
}

TrainResult run_training(const TrainConfig& cfg_in, std::ostream* log) {
  TrainConfig cfg = cfg_in;
  validate_train_config(cfg);
  TrainResult res;
  if (cfg.stage == 1) {
    Stage1Trainer<float> trainer(cfg);
    res = trainer.run(log);
  } else {
    Stage2Trainer<float> trainer(cfg);
    res = trainer.run(log);
  }
  if (log) *log << "trainable fraction " << res.trainable_fraction << "\n";
  if (!cfg.metrics.empty()) {
    std::ofstream f(cfg.metrics, std::ios::trunc);
    if (!f) throw FormatError("cannot open for writing: " + cfg.metrics);
    f << metrics_csv(res.rows);
  }
  return res;
}

}  // namespace mpa
