#include "mpa/evaluate.hpp"

#include <cstdio>

#include "mpa/losses.hpp"
#include "mpa/pipeline.hpp"

namespace mpa {

std::vector<EvalRow> evaluate_grid(CodecModel<float>& model,
                                   const std::vector<ToySample>& samples,
                                   const EvalOptions& opts, const TaskNet<float>* tasknet) {
  if (samples.empty()) throw ConfigError("evaluation needs at least one image");
  if (opts.q_grid.empty() || opts.alpha_grid.empty())
    throw ConfigError("evaluation needs non-empty q and alpha grids");
  if (opts.task != Task::mse && !tasknet)
    throw ConfigError("task metric evaluation needs a task model");
  for (const auto& s : samples) {
    if (opts.task == Task::cls && s.label < 0)
      throw ConfigError("no class label for " + s.name);
    if (opts.task == Task::seg && s.seg.empty())
      throw ConfigError("no segmentation labels for " + s.name);
  }

  PerceptualProxy<float> proxy;
  std::vector<EvalRow> rows;
  rows.reserve(samples.size() * opts.q_grid.size() * opts.alpha_grid.size());
  for (double q : opts.q_grid) {
    // One compression per (image, q); alpha only changes the decode.
    for (const auto& s : samples) {
      CompressStats stats;
      std::vector<std::uint8_t> bytes = compress_image(model, s.image, q, &stats);
      for (double alpha : opts.alpha_grid) {
        DecompressResult out = decompress_image(model, bytes, alpha, opts.task);
        EvalRow row;
        row.image = s.name;
        row.q = stats.q;
        row.alpha = alpha;
        row.task = opts.task;
        row.bpp_estimated = stats.bpp_est;
        row.bpp_actual = stats.bpp_act;
        row.psnr = psnr(s.image, out.image);
        row.proxy_perc = double(proxy
                                    .distance(detail::image_leaf<float>(s.image),
                                              detail::image_leaf<float>(out.image))
                                    ->value[0]);
        if (opts.task == Task::mse) {
          row.task_metric = row.psnr;
        } else if (opts.task == Task::cls) {
          row.task_metric = predict_class(*tasknet, out.image) == s.label ? 1.0 : 0.0;
        } else {
          row.task_metric =
              mean_iou(predict_segmentation(*tasknet, out.image), s.seg, tasknet->classes());
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

std::string eval_report_csv(const std::vector<EvalRow>& rows) {
  std::string out =
      "image,q,alpha,task,bpp_estimated,bpp_actual,psnr,proxy_perc,task_metric\n";
  char line[256];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.4f,%.4f,%s,%.6f,%.6f,%.4f,%.6f,%.6f\n",
                  r.image.c_str(), r.q, r.alpha, task_name(r.task), r.bpp_estimated,
                  r.bpp_actual, r.psnr, r.proxy_perc, r.task_metric);
    out += line;
  }
  return out;
}

}  // namespace mpa
