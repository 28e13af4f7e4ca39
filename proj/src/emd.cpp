#include "emdet/emd.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "emdet/errors.hpp"
#include "emdet/util.hpp"

namespace emdet {

void SearchConfig::validate() const {
  if (max_distance < 1) throw ConfigError("search.max_distance must be >= 1");
  if (patch_size < 3 || patch_size % 2 == 0)
    throw ConfigError("search.patch_size must be odd and >= 3");
  if (weight_gauss < 0 || weight_occupancy < 0 || weight_height < 0)
    throw ConfigError("search weights must be non-negative");
  const double sum = weight_gauss + weight_occupancy + weight_height;
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("search weights must sum to 1, got " + format_number(sum));
  if (moving_magnitude_threshold < 0)
    throw ConfigError("search.moving_magnitude_threshold must be non-negative");
}

void InhibitionKernel::validate() const {
  if (size < 3 || size % 2 == 0) throw ConfigError("inhibition kernel size must be odd and >= 3");
  if (center <= 0) throw ConfigError("inhibition kernel center weight must be positive");
  const double residual = center + 4.0 * (size - 1) * border;
  if (std::abs(residual) > 1e-9)
    throw ConfigError(
        "inhibition kernel violates its zero-sum constraint p + 4(l-1)q = 0; residual " +
        format_number(residual));
}

const Grid<float>& lowpass_step(LowPassState& state, const Grid<float>& input) {
  if (state.tau <= 0) throw ConfigError("lowpass tau must be positive");
  if (!state.initialized) {
    state.filtered = input;
    state.initialized = true;
    return state.filtered;
  }
  if (!state.filtered.same_shape(input))
    throw std::invalid_argument("lowpass input dimensions do not match the state");
  const float gain = static_cast<float>(1.0 / (1.0 + state.tau));
  for (int r = 0; r < input.rows(); ++r) {
    float* f = state.filtered.row(r);
    const float* in = input.row(r);
    for (int c = 0; c < input.cols(); ++c) f[c] += gain * (in[c] - f[c]);
  }
  return state.filtered;
}

std::vector<double> emd_pair_response(std::span<const double> a, std::span<const double> b,
                                      int delay) {
  if (a.size() != b.size()) throw std::invalid_argument("emd_pair_response: length mismatch");
  if (delay < 1) throw std::invalid_argument("emd_pair_response: delay must be >= 1");
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t t = static_cast<std::size_t>(delay); t < a.size(); ++t) {
    out[t] = a[t - delay] * b[t] - a[t] * b[t - delay];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fast search

namespace {

struct BestOffset {
  double score = 0.0;
  int offset = 0;
  bool set = false;

  // Maximize the score; break ties toward the smaller displacement, then the
  // smaller signed offset. Deterministic for golden tests.
  void consider(double s, int x) {
    if (!set || s > score ||
        (s == score && (std::abs(x) < std::abs(offset) ||
                        (std::abs(x) == std::abs(offset) && x < offset)))) {
      score = s;
      offset = x;
      set = true;
    }
  }
};

}  // namespace

RoughField fast_search(const Grid<float>& occupancy, const Grid<float>& filtered,
                       const SearchConfig& config, DetectStats* stats, int workers) {
  config.validate();
  if (!occupancy.same_shape(filtered))
    throw std::invalid_argument("fast_search: map dimensions do not match");
  const int rows = occupancy.rows(), cols = occupancy.cols();
  const int R = config.max_distance;

  RoughField out;
  out.x = Grid<std::int16_t>(rows, cols, 0);
  out.y = Grid<std::int16_t>(rows, cols, 0);
  out.score = Grid<float>(rows, cols, 0.f);
  out.moving = Grid<std::uint8_t>(rows, cols, 0);

  const bool do_h = config.connection != ConnectionMode::VerticalOnly;
  const bool do_v = config.connection != ConnectionMode::HorizontalOnly;

  std::atomic<std::uint64_t> evals{0};
  parallel_chunks(rows, workers, [&](int r0, int r1) {
    std::uint64_t local_evals = 0;
    for (int r = r0; r < r1; ++r) {
      for (int c = 0; c < cols; ++c) {
        const float occ = occupancy(r, c);
        const float fil = filtered(r, c);
        // Both correlator terms vanish when the cell is dark in both maps.
        if (occ == 0.f && fil == 0.f) continue;
        BestOffset best_h, best_v;
        if (do_h) {
          for (int x = -R; x <= R; ++x) {
            const double s = fil * occupancy.at_or(r, c + x, 0.f) -
                             occ * filtered.at_or(r, c + x, 0.f);
            best_h.consider(s, x);
          }
          local_evals += 2 * R + 1;
        }
        if (do_v) {
          for (int y = -R; y <= R; ++y) {
            const double s = fil * occupancy.at_or(r + y, c, 0.f) -
                             occ * filtered.at_or(r + y, c, 0.f);
            best_v.consider(s, y);
          }
          local_evals += 2 * R + 1;
        }
        const double score = std::max(best_h.set ? best_h.score : 0.0,
                                      best_v.set ? best_v.score : 0.0);
        out.x(r, c) = static_cast<std::int16_t>(best_h.set ? best_h.offset : 0);
        out.y(r, c) = static_cast<std::int16_t>(best_v.set ? best_v.offset : 0);
        out.score(r, c) = static_cast<float>(score);
        out.moving(r, c) = (score > config.fast_score_threshold && occ == 1.f) ? 1 : 0;
      }
    }
    evals.fetch_add(local_evals, std::memory_order_relaxed);
  });
  if (stats) stats->fast_score_evals += evals.load();
  return out;
}

// ---------------------------------------------------------------------------
// Sector construction

SectorSpace build_sector(CellOffset bisector, int radius) {
  if (radius < 1) throw ConfigError("sector radius must be >= 1");
  SectorSpace sector;
  sector.bisector = bisector;
  sector.radius = radius;
  const bool full_disc = bisector.x == 0 && bisector.y == 0;
  const long long b2 = static_cast<long long>(bisector.x) * bisector.x +
                       static_cast<long long>(bisector.y) * bisector.y;
  for (int y = -radius; y <= radius; ++y) {
    for (int x = -radius; x <= radius; ++x) {
      const long long n2 = static_cast<long long>(x) * x + static_cast<long long>(y) * y;
      if (n2 > static_cast<long long>(radius) * radius) continue;
      if (x == 0 && y == 0) {
        sector.offsets.push_back({0, 0});
        continue;
      }
      if (full_disc) {
        sector.offsets.push_back({x, y});
        continue;
      }
      // Integer-exact test for angle(offset, bisector) <= 45 degrees:
      // dot > 0 and 2*dot^2 >= |offset|^2 * |bisector|^2.
      const long long dot = static_cast<long long>(x) * bisector.x +
                            static_cast<long long>(y) * bisector.y;
      if (dot > 0 && 2 * dot * dot >= n2 * b2) sector.offsets.push_back({x, y});
    }
  }
  return sector;
}

// ---------------------------------------------------------------------------
// Exact match

ExactMatchResult exact_match(const BevMaps& current, const BevMaps& previous, int row, int col,
                             const SectorSpace& sector, const SearchConfig& config,
                             std::uint64_t* energy_evals) {
  if (sector.offsets.empty()) throw std::logic_error("exact_match: empty sector");
  const int rows = current.rows(), cols = current.cols();
  const int half = config.patch_size / 2;
  const std::size_t n_off = sector.offsets.size();

  std::vector<double> e_gauss(n_off), e_occ(n_off), e_height(n_off);
  for (std::size_t k = 0; k < n_off; ++k) {
    const int x = sector.offsets[k].x;
    const int y = sector.offsets[k].y;
    // Patch rows/cols clipped so both the current index and the shifted
    // previous index stay on the grid.
    const int pr_lo = std::max({row - half, 0, y});
    const int pr_hi = std::min({row + half, rows - 1, rows - 1 + y});
    const int pc_lo = std::max({col - half, 0, x});
    const int pc_hi = std::min({col + half, cols - 1, cols - 1 + x});
    double sum_gauss = 0, sum_occ = 0, sum_height = 0;
    long long n = 0, n_masked = 0;
    for (int pr = pr_lo; pr <= pr_hi; ++pr) {
      const float* cur_occ = current.occupancy.row(pr);
      const float* cur_g = current.gaussian.row(pr);
      const float* cur_h = current.height.row(pr);
      const float* prv_occ = previous.occupancy.row(pr - y);
      const float* prv_g = previous.gaussian.row(pr - y);
      const float* prv_h = previous.height.row(pr - y);
      for (int pc = pc_lo; pc <= pc_hi; ++pc) {
        const int qc = pc - x;
        sum_gauss += std::abs(cur_g[pc] * prv_g[qc]);
        sum_occ += std::abs(cur_occ[pc] - prv_occ[qc]);
        // Height differences only count where either patch is occupied, so
        // the zero stored in empty cells never enters the energy.
        if (cur_occ[pc] != 0.f || prv_occ[qc] != 0.f) {
          sum_height += std::abs(cur_h[pc] - prv_h[qc]);
          ++n_masked;
        }
        ++n;
      }
    }
    // Border patches are clipped; dividing by the participating-cell count
    // keeps their energies comparable with interior ones.
    e_gauss[k] = n > 0 ? sum_gauss / n : 0.0;
    e_occ[k] = n > 0 ? sum_occ / n : 0.0;
    e_height[k] = n_masked > 0 ? sum_height / n_masked : 0.0;
  }
  if (energy_evals) *energy_evals += n_off;

  auto normalize = [&](std::vector<double>& e) {
    const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
    const double min = *lo, range = *hi - *lo;
    if (range <= 0) {
      std::fill(e.begin(), e.end(), 0.0);
      return false;
    }
    for (double& v : e) v = (v - min) / range;
    return true;
  };
  bool any_varies = false;
  any_varies |= normalize(e_gauss);
  any_varies |= normalize(e_occ);
  any_varies |= normalize(e_height);

  ExactMatchResult best;
  best.energy = std::numeric_limits<double>::infinity();
  long long best_norm2 = 0;
  for (std::size_t k = 0; k < n_off; ++k) {
    const double energy = config.weight_gauss * (1.0 - e_gauss[k]) +
                          config.weight_occupancy * e_occ[k] +
                          config.weight_height * e_height[k];
    const CellOffset o = sector.offsets[k];
    const long long norm2 = static_cast<long long>(o.x) * o.x + static_cast<long long>(o.y) * o.y;
    // Offsets are visited in row-major order, so "first wins on full tie"
    // completes the tie-break chain.
    if (energy < best.energy ||
        (energy == best.energy && norm2 < best_norm2)) {
      best.energy = energy;
      best.offset = o;
      best_norm2 = norm2;
    }
  }
  if (!any_varies) {
    best.offset = {0, 0};
    best.degenerate = true;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Lateral inhibition

MotionField lateral_inhibition(const MotionField& field, const InhibitionKernel& kernel,
                               double moving_magnitude_threshold, int workers) {
  kernel.validate();
  const int rows = field.rows(), cols = field.cols();
  const int half = kernel.size / 2;

  struct Tap {
    int dy, dx;
    double w;
  };
  std::vector<Tap> taps;
  taps.push_back({0, 0, kernel.center});
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      if (std::max(std::abs(dy), std::abs(dx)) == half)
        taps.push_back({dy, dx, kernel.border});
    }
  }
  // The threshold is expressed in cells per frame interval. An isolated
  // mover's response is scaled by the center weight, so the comparison
  // happens on that scale; exported scores stay raw.
  const double threshold = moving_magnitude_threshold * kernel.center;

  MotionField out = field;
  parallel_chunks(rows, workers, [&](int r0, int r1) {
    for (int r = r0; r < r1; ++r) {
      for (int c = 0; c < cols; ++c) {
        double fx = 0, fy = 0;
        for (const Tap& t : taps) {
          const int rr = r + t.dy, cc = c + t.dx;
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;  // zero padding
          fx += t.w * field.vx(rr, cc);
          fy += t.w * field.vy(rr, cc);
        }
        const double mag = std::hypot(fx, fy);
        out.score(r, c) = static_cast<float>(mag);
        const bool keep = field.moving(r, c) != 0 && mag >= threshold;
        out.moving(r, c) = keep ? 1 : 0;
        if (!keep) {
          out.vx(r, c) = 0.f;
          out.vy(r, c) = 0.f;
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Full detection step

MotionField detect_motion(const BevMaps& current, const BevMaps& previous, LowPassState& state,
                          const SearchConfig& config, const InhibitionKernel& kernel,
                          const DetectOptions& options, DetectStats* stats) {
  config.validate();
  kernel.validate();
  if (!current.occupancy.same_shape(previous.occupancy))
    throw std::invalid_argument("detect_motion: frame map dimensions do not match");
  const int rows = current.rows(), cols = current.cols();

  if (!state.initialized) lowpass_step(state, previous.occupancy);
  const Grid<float>& filtered = lowpass_step(state, current.occupancy);

  RoughField rough;
  if (options.exhaustive) {
    // Brute-force baseline: every occupied cell searches the full disc.
    rough.x = Grid<std::int16_t>(rows, cols, 0);
    rough.y = Grid<std::int16_t>(rows, cols, 0);
    rough.score = Grid<float>(rows, cols, 0.f);
    rough.moving = Grid<std::uint8_t>(rows, cols, 0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) rough.moving(r, c) = current.occupancy(r, c) == 1.f ? 1 : 0;
  } else {
    rough = fast_search(current.occupancy, filtered, config, stats, options.workers);
  }

  MotionField field;
  field.vx = Grid<float>(rows, cols, 0.f);
  field.vy = Grid<float>(rows, cols, 0.f);
  field.score = Grid<float>(rows, cols, 0.f);
  field.moving = Grid<std::uint8_t>(rows, cols, 0);
  field.rough_x = rough.x;
  field.rough_y = rough.y;
  field.rough_moving = rough.moving;

  // One sector per distinct bisector; built once, shared read-only by the
  // per-cell workers.
  std::map<std::pair<int, int>, SectorSpace> sectors;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!rough.moving(r, c)) continue;
      const std::pair<int, int> key = options.exhaustive
                                          ? std::pair<int, int>{0, 0}
                                          : std::pair<int, int>{rough.x(r, c), rough.y(r, c)};
      if (!sectors.count(key))
        sectors.emplace(key, build_sector({key.first, key.second}, config.max_distance));
    }
  }

  std::atomic<std::uint64_t> exact_evals{0}, rough_cells{0}, degenerate{0};
  parallel_chunks(rows, options.workers, [&](int r0, int r1) {
    std::uint64_t local_evals = 0, local_rough = 0, local_degenerate = 0;
    for (int r = r0; r < r1; ++r) {
      for (int c = 0; c < cols; ++c) {
        if (!rough.moving(r, c)) continue;
        ++local_rough;
        const std::pair<int, int> key = options.exhaustive
                                            ? std::pair<int, int>{0, 0}
                                            : std::pair<int, int>{rough.x(r, c), rough.y(r, c)};
        const SectorSpace& sector = sectors.at(key);
        const ExactMatchResult res =
            exact_match(current, previous, r, c, sector, config, &local_evals);
        if (res.degenerate) ++local_degenerate;
        field.vx(r, c) = static_cast<float>(res.offset.x);
        field.vy(r, c) = static_cast<float>(res.offset.y);
        field.moving(r, c) = 1;  // pre-inhibition flag
      }
    }
    exact_evals.fetch_add(local_evals, std::memory_order_relaxed);
    rough_cells.fetch_add(local_rough, std::memory_order_relaxed);
    degenerate.fetch_add(local_degenerate, std::memory_order_relaxed);
  });
  if (stats) {
    stats->exact_energy_evals += exact_evals.load();
    stats->rough_moving_cells += rough_cells.load();
    stats->degenerate_cells += degenerate.load();
  }

  return lateral_inhibition(field, kernel, config.moving_magnitude_threshold, options.workers);
}

// ---------------------------------------------------------------------------
// Exports

void write_motion_field_csv(const std::filesystem::path& path, const MotionField& field) {
  std::string csv = "row,col,x,y,score,moving\n";
  for (int r = 0; r < field.rows(); ++r) {
    for (int c = 0; c < field.cols(); ++c) {
      if (!field.moving(r, c) && !field.rough_moving(r, c)) continue;
      csv += std::to_string(r) + "," + std::to_string(c) + "," + format_number(field.vx(r, c)) +
             "," + format_number(field.vy(r, c)) + "," + format_number(field.score(r, c)) + "," +
             (field.moving(r, c) ? "1" : "0") + "\n";
    }
  }
  write_text_file(path, csv);
}

MotionField read_motion_field_csv(const std::filesystem::path& path, int rows, int cols) {
  MotionField field;
  field.vx = Grid<float>(rows, cols, 0.f);
  field.vy = Grid<float>(rows, cols, 0.f);
  field.score = Grid<float>(rows, cols, 0.f);
  field.moving = Grid<std::uint8_t>(rows, cols, 0);
  field.rough_x = Grid<std::int16_t>(rows, cols, 0);
  field.rough_y = Grid<std::int16_t>(rows, cols, 0);
  field.rough_moving = Grid<std::uint8_t>(rows, cols, 0);

  std::istringstream ss(read_text_file(path));
  std::string line;
  bool header = true;
  while (std::getline(ss, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    const auto tokens = split_ws(line);
    if (tokens.size() != 6) throw DataError("motion field csv: expected 6 columns");
    long long r, c, moving;
    double x, y, score;
    if (!parse_int(tokens[0], r) || !parse_int(tokens[1], c) || !parse_double(tokens[2], x) ||
        !parse_double(tokens[3], y) || !parse_double(tokens[4], score) ||
        !parse_int(tokens[5], moving))
      throw DataError("motion field csv: unparsable row");
    if (r < 0 || r >= rows || c < 0 || c >= cols)
      throw DataError("motion field csv: cell index out of range");
    field.vx(r, c) = static_cast<float>(x);
    field.vy(r, c) = static_cast<float>(y);
    field.score(r, c) = static_cast<float>(score);
    field.moving(r, c) = moving ? 1 : 0;
    field.rough_moving(r, c) = 1;
  }
  return field;
}

namespace {

void hsv_to_rgb(double h, double s, double v, std::uint8_t rgb[3]) {
  const double c = v * s;
  const double hp = h / 60.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  rgb[0] = static_cast<std::uint8_t>(std::lround((r + m) * 255));
  rgb[1] = static_cast<std::uint8_t>(std::lround((g + m) * 255));
  rgb[2] = static_cast<std::uint8_t>(std::lround((b + m) * 255));
}

}  // namespace

void write_flow_image(const std::filesystem::path& path, const MotionField& field,
                      double max_magnitude) {
  std::string out = "P6\n" + std::to_string(field.cols()) + " " + std::to_string(field.rows()) +
                    "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(field.rows()) * field.cols() * 3);
  for (int r = 0; r < field.rows(); ++r) {
    for (int c = 0; c < field.cols(); ++c) {
      std::uint8_t rgb[3] = {0, 0, 0};
      if (field.moving(r, c)) {
        const double vx = field.vx(r, c), vy = field.vy(r, c);
        double hue = std::atan2(vy, vx) * 180.0 / M_PI;
        if (hue < 0) hue += 360.0;
        const double sat =
            max_magnitude > 0 ? std::min(1.0, std::hypot(vx, vy) / max_magnitude) : 0.0;
        hsv_to_rgb(hue, sat, 1.0, rgb);
      }
      out.append(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  write_text_file(path, out);
}

}  // namespace emdet
