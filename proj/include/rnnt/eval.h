// include/rnnt/eval.h

#ifndef RNNT_EVAL_H_
#define RNNT_EVAL_H_

#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rnnt/decoder.h"

namespace rnnt {

struct ErrorCounts {
  size_t sub = 0;
  size_t del = 0;
  size_t ins = 0;
  size_t ref_len = 0;

  size_t errors() const { return sub + del + ins; }
  // WER is undefined for an empty reference; wer() then returns NaN.
  bool wer_defined() const { return ref_len > 0; }
  double wer() const;
  // Percentages of ref_len.
  double sub_rate() const;
  double del_rate() const;
  double ins_rate() const;

  ErrorCounts &operator+=(const ErrorCounts &o);
  bool operator==(const ErrorCounts &) const = default;
};

// Levenshtein alignment with unit costs. Among minimal alignments the
// backtrace from the end prefers match/substitution, then deletion, then
// insertion.
ErrorCounts EditAlign(std::span<const int> ref, std::span<const int> hyp);

// Sums counts over utterances matched by id before dividing. ArgumentError
// when the id sets differ.
ErrorCounts CorpusWer(const std::map<std::string, std::vector<int>> &refs,
                      const std::map<std::string, std::vector<int>> &hyps);

// lo, lo + step, ... up to hi inclusive (within 1e-9 of a step), each value
// rounded to 12 decimals so grids print and compare cleanly.
std::vector<double> ScaleRange(double lo, double hi, double step);

struct SweepCell {
  double x = 0.0;
  double y = 0.0;
  ErrorCounts counts;
};

struct SweepResult {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<SweepCell> cells;  // x-major: index i * ys.size() + j
  size_t best = 0;

  const SweepCell &optimum() const { return cells[best]; }
};

// Picks the cell with the fewest errors; ties go to smaller x, then smaller
// y. `counts` is in x-major order.
SweepResult MakeSweepResult(const std::vector<double> &xs,
                            const std::vector<double> &ys,
                            std::vector<ErrorCounts> counts);

using CellEvaluator = std::function<ErrorCounts(double x, double y)>;

// Evaluates every grid cell. A failing cell aborts the sweep with an Error
// naming the cell.
SweepResult SweepScales(const std::vector<double> &xs,
                        const std::vector<double> &ys,
                        const CellEvaluator &evaluate);

// Fusion parameter a sweep axis controls.
enum class ScaleAxis { kLmScale, kIlmScale, kLengthReward };
std::string ScaleAxisName(ScaleAxis axis);
void SetScale(FusionConfig &config, ScaleAxis axis, double value);

struct AnalysisSpec {
  std::string name;
  FusionConfig base;
  ScaleAxis x_axis = ScaleAxis::kLmScale;
  std::vector<double> x_values;
  ScaleAxis y_axis = ScaleAxis::kIlmScale;
  std::vector<double> y_values;  // {0} for a one-dimensional sweep
  // Copy the tuned y value (usually lambda2) of an earlier row into `base`
  // before sweeping; -1 for none.
  int inherit_ilm_scale_from = -1;
};

struct AnalysisRow {
  std::string name;
  FusionConfig tuned;
  ErrorCounts counts;
};

// Evaluates a list of configs on the dev set and returns corpus counts in
// the same order.
using BatchEvaluator =
    std::function<std::vector<ErrorCounts>(const std::vector<FusionConfig> &)>;

std::vector<AnalysisRow> AnalysisReport(const std::vector<AnalysisSpec> &specs,
                                        const BatchEvaluator &evaluate);

// Plain-text table with aligned columns and a CSV rendering with a header.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};
std::string RenderText(const Table &table);
std::string RenderCsv(const Table &table);
Table AnalysisTable(const std::vector<AnalysisRow> &rows);
// One row per cell: x, y, WER, Sub, Del, Ins, errors, ref_len.
Table SweepTable(const SweepResult &sweep, const std::string &x_name,
                 const std::string &y_name);

std::string FormatFixed(double v, int decimals);

}  // namespace rnnt

#endif  // RNNT_EVAL_H_
