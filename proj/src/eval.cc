// src/eval.cc

#include "rnnt/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "rnnt/error.h"

namespace rnnt {

double ErrorCounts::wer() const {
  if (!wer_defined()) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(errors()) / static_cast<double>(ref_len);
}

namespace {
double Rate(size_t n, size_t ref_len) {
  if (ref_len == 0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * static_cast<double>(n) / static_cast<double>(ref_len);
}
}  // namespace

double ErrorCounts::sub_rate() const { return Rate(sub, ref_len); }
double ErrorCounts::del_rate() const { return Rate(del, ref_len); }
double ErrorCounts::ins_rate() const { return Rate(ins, ref_len); }

ErrorCounts &ErrorCounts::operator+=(const ErrorCounts &o) {
  sub += o.sub;
  del += o.del;
  ins += o.ins;
  ref_len += o.ref_len;
  return *this;
}

ErrorCounts EditAlign(std::span<const int> ref, std::span<const int> hyp) {
  const size_t n = ref.size(), m = hyp.size();
  std::vector<size_t> d((n + 1) * (m + 1));
  auto at = [&](size_t i, size_t j) -> size_t & { return d[i * (m + 1) + j]; };
  for (size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (size_t i = 1; i <= n; ++i) {
    for (size_t j = 1; j <= m; ++j) {
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]),
                           at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  ErrorCounts c;
  c.ref_len = n;
  size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 &&
        at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
      c.sub += ref[i - 1] != hyp[j - 1];
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.del;
      --i;
    } else {
      ++c.ins;
      --j;
    }
  }
  return c;
}

ErrorCounts CorpusWer(const std::map<std::string, std::vector<int>> &refs,
                      const std::map<std::string, std::vector<int>> &hyps) {
  if (refs.size() != hyps.size()) {
    throw ArgumentError("corpus WER: " + std::to_string(refs.size()) +
                        " references but " + std::to_string(hyps.size()) +
                        " hypotheses");
  }
  ErrorCounts total;
  for (const auto &[id, ref] : refs) {
    auto it = hyps.find(id);
    if (it == hyps.end()) {
      throw ArgumentError("corpus WER: no hypothesis for '" + id + "'");
    }
    total += EditAlign(ref, it->second);
  }
  return total;
}

std::vector<double> ScaleRange(double lo, double hi, double step) {
  if (!(step > 0) || hi < lo) {
    throw ArgumentError("scale range: need step > 0 and hi >= lo");
  }
  const auto n = static_cast<size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (size_t i = 0; i < n; ++i) {
    out.push_back(std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return out;
}

SweepResult MakeSweepResult(const std::vector<double> &xs,
                            const std::vector<double> &ys,
                            std::vector<ErrorCounts> counts) {
  if (xs.empty() || ys.empty()) throw ArgumentError("sweep: empty range");
  if (counts.size() != xs.size() * ys.size()) {
    throw ArgumentError("sweep: cell count mismatch");
  }
  SweepResult r;
  r.xs = xs;
  r.ys = ys;
  for (size_t i = 0; i < xs.size(); ++i) {
    for (size_t j = 0; j < ys.size(); ++j) {
      r.cells.push_back(SweepCell{xs[i], ys[j], counts[i * ys.size() + j]});
    }
  }
  // Cells are visited in increasing x, then y, so a strict comparison keeps
  // the smallest scales on ties. Comparing cross-multiplied counts keeps the
  // choice exact even if reference lengths differ.
  for (size_t k = 1; k < r.cells.size(); ++k) {
    const ErrorCounts &a = r.cells[k].counts, &b = r.cells[r.best].counts;
    if (a.errors() * b.ref_len < b.errors() * a.ref_len) r.best = k;
  }
  return r;
}

SweepResult SweepScales(const std::vector<double> &xs,
                        const std::vector<double> &ys,
                        const CellEvaluator &evaluate) {
  std::vector<ErrorCounts> counts;
  for (double x : xs) {
    for (double y : ys) {
      try {
        counts.push_back(evaluate(x, y));
      } catch (const std::exception &e) {
        throw Error("sweep cell (" + FormatFixed(x, 4) + ", " +
                    FormatFixed(y, 4) + ") failed: " + e.what());
      }
    }
  }
  return MakeSweepResult(xs, ys, std::move(counts));
}

std::string ScaleAxisName(ScaleAxis axis) {
  switch (axis) {
    case ScaleAxis::kLmScale: return "lm-scale";
    case ScaleAxis::kIlmScale: return "ilm-scale";
    case ScaleAxis::kLengthReward: return "length-reward";
  }
  return "";
}

void SetScale(FusionConfig &config, ScaleAxis axis, double value) {
  switch (axis) {
    case ScaleAxis::kLmScale: config.lm_scale = value; break;
    case ScaleAxis::kIlmScale: config.ilm_scale = value; break;
    case ScaleAxis::kLengthReward: config.length_reward = value; break;
  }
}

std::vector<AnalysisRow> AnalysisReport(const std::vector<AnalysisSpec> &specs,
                                        const BatchEvaluator &evaluate) {
  std::vector<AnalysisRow> rows;
  for (size_t r = 0; r < specs.size(); ++r) {
    const AnalysisSpec &spec = specs[r];
    FusionConfig base = spec.base;
    if (spec.inherit_ilm_scale_from >= 0) {
      if (static_cast<size_t>(spec.inherit_ilm_scale_from) >= r) {
        throw ArgumentError("analysis: row '" + spec.name +
                            "' inherits from a later row");
      }
      base.ilm_scale = rows[spec.inherit_ilm_scale_from].tuned.ilm_scale;
    }
    std::vector<FusionConfig> cells;
    for (double x : spec.x_values) {
      for (double y : spec.y_values) {
        FusionConfig c = base;
        SetScale(c, spec.x_axis, x);
        SetScale(c, spec.y_axis, y);
        cells.push_back(c);
      }
    }
    std::vector<ErrorCounts> counts;
    try {
      counts = evaluate(cells);
    } catch (const std::exception &e) {
      throw Error("analysis row '" + spec.name + "' failed: " + e.what());
    }
    const SweepResult sweep =
        MakeSweepResult(spec.x_values, spec.y_values, std::move(counts));
    rows.push_back(AnalysisRow{spec.name, cells[sweep.best],
                               sweep.optimum().counts});
  }
  return rows;
}

std::string FormatFixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

std::string RenderText(const Table &table) {
  std::vector<size_t> width(table.header.size());
  for (size_t c = 0; c < width.size(); ++c) width[c] = table.header[c].size();
  for (const auto &row : table.rows) {
    for (size_t c = 0; c < row.size() && c < width.size(); ++c) {
      width[c] = std::max(width[c], row[c].size());
    }
  }
  std::ostringstream os;
  auto line = [&](const std::vector<std::string> &cells) {
    for (size_t c = 0; c < width.size(); ++c) {
      const std::string &v = c < cells.size() ? cells[c] : std::string();
      // First column left-aligned, numbers right-aligned.
      if (c == 0) {
        os << v << std::string(width[c] - v.size(), ' ');
      } else {
        os << "  " << std::string(width[c] - v.size(), ' ') << v;
      }
    }
    os << '\n';
  };
  line(table.header);
  size_t total = 0;
  for (size_t w : width) total += w + 2;
  os << std::string(total - 2, '-') << '\n';
  for (const auto &row : table.rows) line(row);
  return os.str();
}

std::string RenderCsv(const Table &table) {
  std::ostringstream os;
  auto line = [&](const std::vector<std::string> &cells) {
    for (size_t c = 0; c < cells.size(); ++c) {
      os << (c ? "," : "") << cells[c];
    }
    os << '\n';
  };
  line(table.header);
  for (const auto &row : table.rows) line(row);
  return os.str();
}

Table AnalysisTable(const std::vector<AnalysisRow> &rows) {
  Table t;
  t.header = {"evaluation", "lm-scale", "ilm-scale", "length-reward",
              "WER", "Sub", "Del", "Ins"};
  for (const auto &r : rows) {
    t.rows.push_back({r.name, FormatFixed(r.tuned.lm_scale, 2),
                      FormatFixed(r.tuned.ilm_scale, 2),
                      FormatFixed(r.tuned.length_reward, 2),
                      FormatFixed(100.0 * r.counts.wer(), 2),
                      FormatFixed(r.counts.sub_rate(), 2),
                      FormatFixed(r.counts.del_rate(), 2),
                      FormatFixed(r.counts.ins_rate(), 2)});
  }
  return t;
}

Table SweepTable(const SweepResult &sweep, const std::string &x_name,
                 const std::string &y_name) {
  Table t;
  t.header = {x_name, y_name, "WER", "Sub", "Del", "Ins", "errors", "ref_len"};
  for (const auto &c : sweep.cells) {
    t.rows.push_back({FormatFixed(c.x, 4), FormatFixed(c.y, 4),
                      FormatFixed(100.0 * c.counts.wer(), 2),
                      FormatFixed(c.counts.sub_rate(), 2),
                      FormatFixed(c.counts.del_rate(), 2),
                      FormatFixed(c.counts.ins_rate(), 2),
                      std::to_string(c.counts.errors()),
                      std::to_string(c.counts.ref_len)});
  }
  return t;
}

}  // namespace rnnt
