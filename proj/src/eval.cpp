#include "emdet/eval.hpp"

#include <algorithm>
#include <cmath>

#include "emdet/errors.hpp"
#include "emdet/util.hpp"

namespace emdet {

std::string view_name(View v) {
  switch (v) {
    case View::TwoD: return "2d";
    case View::Bev: return "bev";
    default: return "3d";
  }
}

MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<ObjectLabel>& gts, double iou_threshold,
                             View view) {
  if (view == View::TwoD)
    throw ConfigError(
        "2d (field-of-view) evaluation needs camera calibration, which this build does not "
        "consume; use bev or 3d");

  MatchResult result;
  const IoUMode mode = view == View::Bev ? IoUMode::Bev : IoUMode::Volume3D;

  std::vector<const ObjectLabel*> moving;
  for (const ObjectLabel& g : gts) {
    if (g.is_moving) moving.push_back(&g);
  }
  for (const ObjectLabel* g : moving) {
    GtOutcome o;
    o.track_id = g->track_id;
    o.category = g->category;
    o.distance = g->box.center.head<2>().norm();
    result.gts.push_back(o);
  }
  for (std::size_t i = 0; i < dets.size(); ++i) {
    DetOutcome o;
    o.index = i;
    o.category = dets[i].category;
    result.dets.push_back(o);
  }

  struct Pair {
    double iou;
    std::size_t det, gt;
  };
  std::vector<Pair> pairs;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    for (std::size_t g = 0; g < moving.size(); ++g) {
      const double v = iou(dets[d].box, moving[g]->box, mode);
      if (v >= iou_threshold) pairs.push_back({v, d, g});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    return std::tie(a.det, a.gt) < std::tie(b.det, b.gt);
  });
  for (const Pair& p : pairs) {
    if (result.dets[p.det].matched || result.gts[p.gt].matched) continue;
    result.dets[p.det].matched = true;
    result.dets[p.det].iou = p.iou;
    result.gts[p.gt].matched = true;
    result.gts[p.gt].iou = p.iou;
    ++result.tp;
  }
  result.fp = static_cast<int>(dets.size()) - result.tp;
  result.fn = static_cast<int>(moving.size()) - result.tp;
  return result;
}

namespace {

void finalize(MetricsBlock& b) {
  const std::uint64_t det = b.tp + b.fp;
  const std::uint64_t gt = b.tp + b.fn;
  if (det == 0 || gt == 0) b.degenerate = true;
  b.precision = det > 0 ? static_cast<double>(b.tp) / det : 0.0;
  b.recall = gt > 0 ? static_cast<double>(b.tp) / gt : 0.0;
  b.f1 = (b.precision + b.recall) > 0 ? 2.0 * b.precision * b.recall / (b.precision + b.recall)
                                      : 0.0;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<MatchResult>& matches, double max_distance_bin) {
  MetricsReport report;
  for (const MatchResult& m : matches) {
    for (const GtOutcome& g : m.gts) {
      auto& cat = report.per_category[g.category];
      if (g.matched) {
        ++report.total.tp;
        ++cat.tp;
      } else {
        ++report.total.fn;
        ++cat.fn;
      }
    }
    for (const DetOutcome& d : m.dets) {
      if (!d.matched) {
        ++report.total.fp;
        ++report.per_category[d.category].fp;
      }
    }
  }
  finalize(report.total);
  for (auto& [cat, block] : report.per_category) finalize(block);

  std::vector<double> bins;
  for (double b = 10.0; b <= max_distance_bin + 1e-9; b += 10.0) bins.push_back(b);
  report.recall_curve = recall_by_distance(matches, bins);
  return report;
}

std::vector<DistanceBin> recall_by_distance(const std::vector<MatchResult>& matches,
                                            const std::vector<double>& bin_uppers) {
  if (!std::is_sorted(bin_uppers.begin(), bin_uppers.end()))
    throw std::invalid_argument("recall_by_distance: bins must be sorted ascending");
  std::vector<DistanceBin> bins;
  for (double u : bin_uppers) bins.push_back({u, 0, 0, 0.0});
  bins.push_back({std::numeric_limits<double>::infinity(), 0, 0, 0.0});

  for (const MatchResult& m : matches) {
    for (const GtOutcome& g : m.gts) {
      std::size_t i = 0;
      while (i + 1 < bins.size() && g.distance > bins[i].upper) ++i;
      ++bins[i].gt_count;
      if (g.matched) ++bins[i].matched;
    }
  }
  std::vector<DistanceBin> out;
  for (DistanceBin& b : bins) {
    if (b.gt_count == 0) continue;  // absent, not zero
    b.recall = static_cast<double>(b.matched) / static_cast<double>(b.gt_count);
    out.push_back(b);
  }
  return out;
}

std::string format_metrics_table(const MetricsReport& report, const std::string& title) {
  auto row = [](const std::string& name, const MetricsBlock& b) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  %-12s %6llu %6llu %6llu   %.4f  %.4f  %.4f%s\n",
                  name.c_str(), static_cast<unsigned long long>(b.tp),
                  static_cast<unsigned long long>(b.fp), static_cast<unsigned long long>(b.fn),
                  b.precision, b.recall, b.f1, b.degenerate ? "  (degenerate)" : "");
    return std::string(buf);
  };
  std::string s = title + "\n";
  s += "  category        tp     fp     fn   pre     rec     f1\n";
  s += row("total", report.total);
  for (const auto& [cat, block] : report.per_category) s += row(category_name(cat), block);
  if (!report.recall_curve.empty()) {
    s += "  recall by distance:\n";
    for (const DistanceBin& b : report.recall_curve) {
      char buf[96];
      if (std::isinf(b.upper))
        std::snprintf(buf, sizeof(buf), "    >last bin: %.4f (%llu gt)\n", b.recall,
                      static_cast<unsigned long long>(b.gt_count));
      else
        std::snprintf(buf, sizeof(buf), "    <=%.0fm: %.4f (%llu gt)\n", b.upper, b.recall,
                      static_cast<unsigned long long>(b.gt_count));
      s += buf;
    }
  }
  return s;
}

void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::string csv = "category,tp,fp,fn,precision,recall,f1,degenerate\n";
  auto row = [&](const std::string& name, const MetricsBlock& b) {
    csv += name + "," + std::to_string(b.tp) + "," + std::to_string(b.fp) + "," +
           std::to_string(b.fn) + "," + format_number(b.precision) + "," +
           format_number(b.recall) + "," + format_number(b.f1) + "," +
           (b.degenerate ? "1" : "0") + "\n";
  };
  row("total", report.total);
  for (const auto& [cat, block] : report.per_category) row(category_name(cat), block);
  write_text_file(path, csv);
}

void write_recall_curve_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::string csv = "bin_upper_m,recall\n";
  for (const DistanceBin& b : report.recall_curve) {
    csv += (std::isinf(b.upper) ? std::string("inf") : format_number(b.upper)) + "," +
           format_number(b.recall) + "\n";
  }
  write_text_file(path, csv);
}

}  // namespace emdet
