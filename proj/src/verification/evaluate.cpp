#include <algorithm>
#include <cstdio>
#include <ostream>

#include "nwq/error.hpp"
#include "nwq/verification.hpp"

namespace nwq {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string level_name(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%g", level);
  return buf;
}

}  // namespace

std::vector<OutputHead> output_heads(const ModelConfig& config) {
  if (!config.quantiles) return {OutputHead{"det", std::nullopt, std::nullopt}};
  std::vector<OutputHead> heads;
  for (std::size_t q = 0; q < config.quantiles->size(); ++q) {
    const double level = config.quantiles->levels[q];
    heads.push_back({level_name(level), q, level});
  }
  return heads;
}

Tensor<float> predict(const Checkpoint& ckpt, const Sequences& samples, std::size_t batch_size) {
  if (samples.empty()) throw ContractError("predict: no samples");
  if (batch_size == 0) batch_size = 1;
  Tape<float> tape(false);
  const std::size_t out_c = ckpt.model.output_channels();
  const std::size_t plane = ckpt.model.grid_h * ckpt.model.grid_w;
  std::vector<float> values;
  values.reserve(samples.size() * out_c * plane);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = make_batch(samples, idx, ckpt.stats);
    const auto out = forward(tape, ckpt.params, ckpt.model, batch.inputs);
    values.insert(values.end(), out.values().begin(), out.values().end());
  }
  return Tensor<float>({samples.size(), out_c, ckpt.model.grid_h, ckpt.model.grid_w}, std::move(values));
}

double head_mse(const Checkpoint& ckpt, const Sequences& samples, const NormalizationStats& stats,
                std::optional<std::size_t> q_index) {
  if (samples.empty()) throw ContractError("head_mse: no samples");
  const std::size_t nq = ckpt.model.quantile_count();
  if (q_index && *q_index >= nq) throw ContractError("head_mse: quantile index out of range");
  const std::size_t q = q_index.value_or(0);
  const std::size_t leads = ckpt.model.lead_times;
  const std::size_t plane = ckpt.model.grid_h * ckpt.model.grid_w;
  RegressionAccumulator acc;
  Tape<float> tape(false);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += 32) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + 32); ++i) idx.push_back(i);
    const auto batch = make_batch(samples, idx, stats);
    const auto out = forward(tape, ckpt.params, ckpt.model, batch.inputs);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      for (std::size_t l = 0; l < leads; ++l) {
        acc.add(out.values().subspan(((b * leads + l) * nq + q) * plane, plane),
                batch.targets.values().subspan((b * leads + l) * plane, plane));
      }
    }
  }
  return acc.scores().mse;
}

EvaluationReport evaluate_model(const std::string& model_name, const Checkpoint& ckpt, const Sequences& test,
                                const NormalizationStats& stats, std::span<const double> thresholds,
                                std::span<const std::string> only) {
  if (test.empty()) throw ContractError("evaluate: empty test set");
  if (!(ckpt.stats == stats)) throw ContractError("evaluate: checkpoint and dataset normalization differ");
  const auto& first = test.front();
  const auto& m = ckpt.model;
  if (first.input_frames() != m.input_frames || first.lead_times() != m.lead_times ||
      first.archive().height != m.grid_h || first.archive().width != m.grid_w) {
    throw DimensionError("evaluate: checkpoint and dataset shapes differ");
  }

  std::vector<OutputHead> heads;
  const auto all = output_heads(m);
  if (only.empty()) {
    heads = all;
  } else {
    for (const auto& name : only) {
      auto it = std::find_if(all.begin(), all.end(), [&](const OutputHead& h) { return h.name == name; });
      if (it == all.end()) throw ContractError("evaluate: model " + model_name + " has no output head " + name);
      heads.push_back(*it);
    }
  }

  const std::vector<double> thr(thresholds.begin(), thresholds.end());
  const std::size_t leads = m.lead_times, nq = m.quantile_count(), plane = m.grid_h * m.grid_w;
  const std::uint32_t sph = first.archive().steps_per_hour;
  std::vector<ConfusionTable> tables(heads.size(), ConfusionTable(thr, leads));
  std::vector<RegressionAccumulator> regression(heads.size());
  std::vector<std::uint64_t> covered(heads.size(), 0), pixels(heads.size(), 0);

  Tape<float> tape(false);
  std::vector<std::size_t> idx;
  std::vector<float> rate(plane), pred_rate(plane);
  std::vector<std::vector<std::uint8_t>> observed(thr.size());
  for (std::size_t start = 0; start < test.size(); start += 32) {
    idx.clear();
    for (std::size_t i = start; i < std::min(test.size(), start + 32); ++i) idx.push_back(i);
    const auto batch = make_batch(test, idx, stats);
    const auto out = forward(tape, ckpt.params, m, batch.inputs);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      for (std::size_t l = 0; l < leads; ++l) {
        const auto obs = batch.targets.values().subspan((b * leads + l) * plane, plane);
        for (std::size_t i = 0; i < plane; ++i) rate[i] = to_rate(stats.denormalize(obs[i]), sph);
        for (std::size_t t = 0; t < thr.size(); ++t) observed[t] = binarize(rate, thr[t]);

        for (std::size_t h = 0; h < heads.size(); ++h) {
          const std::size_t channel = l * nq + heads[h].q_index.value_or(0);
          const auto pred = out.values().subspan((b * leads * nq + channel) * plane, plane);
          regression[h].add(pred, obs);
          for (std::size_t i = 0; i < plane; ++i) covered[h] += obs[i] <= pred[i] ? 1 : 0;
          pixels[h] += plane;
          for (std::size_t i = 0; i < plane; ++i) pred_rate[i] = to_rate(stats.denormalize(pred[i]), sph);
          for (std::size_t t = 0; t < thr.size(); ++t) {
            accumulate_confusion(binarize(pred_rate, thr[t]), observed[t], tables[h], t, l);
          }
        }
      }
    }
  }

  EvaluationReport report;
  report.observed_events.assign(thr.size(), 0);
  for (std::size_t t = 0; t < thr.size() && !heads.empty(); ++t) {
    for (std::size_t l = 0; l < leads; ++l) {
      const auto& c = tables[0].at(t, l);
      report.observed_events[t] += c.tp + c.fn;
    }
  }
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const auto reg = regression[h].scores();
    for (std::size_t t = 0; t < thr.size(); ++t) {
      std::vector<EventScores> per_lead;
      for (std::size_t l = 0; l < leads; ++l) {
        per_lead.push_back(event_scores(tables[h].at(t, l)));
        report.curves.push_back({model_name, heads[h].name, thr[t], l + 1, per_lead.back()});
      }
      report.summary.push_back({model_name, heads[h].name, thr[t], average_scores(per_lead), reg.mse, reg.mae});
    }
    if (heads[h].level) {
      report.coverage.push_back({model_name, heads[h].name, *heads[h].level,
                                 static_cast<double>(covered[h]) / static_cast<double>(pixels[h])});
    }
  }
  return report;
}

void EvaluationReport::append(const EvaluationReport& o) {
  summary.insert(summary.end(), o.summary.begin(), o.summary.end());
  curves.insert(curves.end(), o.curves.begin(), o.curves.end());
  coverage.insert(coverage.end(), o.coverage.begin(), o.coverage.end());
  if (observed_events.empty()) observed_events = o.observed_events;
}

void EvaluationReport::write_summary_csv(std::ostream& os) const {
  os << "model,output,threshold,csi,pod,far,mcc,mse,mae\n";
  for (const auto& r : summary) {
    os << r.model << ',' << r.output << ',' << num(r.threshold) << ',' << num(r.scores.csi) << ','
       << num(r.scores.pod) << ',' << num(r.scores.far) << ',' << num(r.scores.mcc) << ',' << num(r.mse)
       << ',' << num(r.mae) << '\n';
  }
}

void EvaluationReport::write_curves_csv(std::ostream& os) const {
  os << "model,output,threshold,lead_time,csi,pod,far,mcc\n";
  for (const auto& r : curves) {
    os << r.model << ',' << r.output << ',' << num(r.threshold) << ',' << r.lead_time << ','
       << num(r.scores.csi) << ',' << num(r.scores.pod) << ',' << num(r.scores.far) << ','
       << num(r.scores.mcc) << '\n';
  }
}

void EvaluationReport::write_coverage_csv(std::ostream& os) const {
  os << "model,output,level,coverage\n";
  for (const auto& r : coverage) {
    os << r.model << ',' << r.output << ',' << num(r.level) << ',' << num(r.coverage) << '\n';
  }
}

}  // namespace nwq
