#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "emdet/grid.hpp"
#include "emdet/preprocess.hpp"

namespace emdet {

/// First-order low-pass filter over the frame sequence. The delayed arm of
/// the correlator: per step, filtered += (1/(1+tau)) * (input - filtered),
/// which keeps a blurred trace of where occupancy recently was.
struct LowPassState {
  double tau = 2.0;  // frames
  Grid<float> filtered;
  bool initialized = false;
};

/// The first call initializes the state with the input map and returns it
/// unchanged; later calls apply the update above.
const Grid<float>& lowpass_step(LowPassState& state, const Grid<float>& input);

/// Which receptor connections the fast-search stage evaluates. Restricting
/// the axis tunes the detector to a motion direction of interest.
enum class ConnectionMode : std::uint8_t { Both, HorizontalOnly, VerticalOnly };

struct SearchConfig {
  int max_distance = 10;  // R, cells; upper bound on detectable displacement
  int patch_size = 21;    // m, odd; template edge length in cells
  double weight_gauss = 0.1;      // on the Gaussian-map correlation term
  double weight_occupancy = 0.8;  // on the occupancy difference term
  double weight_height = 0.1;     // on the height difference term
  double fast_score_threshold = 0.0;       // rough stage moving test, strict >
  double moving_magnitude_threshold = 1.0;  // cells per frame pair, post-inhibition
  ConnectionMode connection = ConnectionMode::Both;

  void validate() const;
};

/// Zero-sum ring kernel: `center` in the middle, `border` on the outermost
/// ring, zero between. center + 4*(size-1)*border must vanish, so globally
/// uniform motion (background or IMU drift) filters to zero.
struct InhibitionKernel {
  int size = 15;
  double center = 0.56;
  double border = -0.01;

  void validate() const;
};

struct CellOffset {
  int x = 0;  // columns, forward axis
  int y = 0;  // rows, lateral axis
};

/// Candidate displacement set for the exact-match stage: integer offsets
/// within Euclidean radius R and within 45 degrees of the bisector, plus
/// (0,0). A zero bisector falls back to the full disc.
struct SectorSpace {
  CellOffset bisector;
  int radius = 0;
  std::vector<CellOffset> offsets;  // row-major order (y, then x)
};

SectorSpace build_sector(CellOffset bisector, int radius);

/// Output of the fast-search stage: per-cell rough displacement from the
/// axis-aligned correlator scores, and the rough moving mask (positive score
/// on an occupied cell).
struct RoughField {
  Grid<std::int16_t> x, y;
  Grid<float> score;
  Grid<std::uint8_t> moving;
};

/// Detector output. Vectors are cells per frame interval (fractional after
/// fusion), defined only where `moving` or `rough_moving` is set; the
/// infinity norm of any vector is bounded by the search radius.
struct MotionField {
  Grid<float> vx, vy;
  Grid<float> score;
  Grid<std::uint8_t> moving;
  Grid<std::int16_t> rough_x, rough_y;
  Grid<std::uint8_t> rough_moving;

  int rows() const { return vx.rows(); }
  int cols() const { return vx.cols(); }
};

/// Work counters for the coarse-to-fine complexity claim. One fast
/// evaluation is a single correlator score S[x]; one exact evaluation is a
/// full patch-energy computation at one candidate offset.
struct DetectStats {
  std::uint64_t fast_score_evals = 0;
  std::uint64_t exact_energy_evals = 0;
  std::uint64_t rough_moving_cells = 0;
  std::uint64_t degenerate_cells = 0;
};

/// Reference mirror-symmetric correlator on 1D signals:
/// out[t] = a[t-delay]*b[t] - a[t]*b[t-delay], zero for t < delay.
/// Swapping the inputs negates the response sample for sample.
std::vector<double> emd_pair_response(std::span<const double> a, std::span<const double> b,
                                      int delay);

/// Axis-aligned correlator scores over a (2R+1) window per axis. A cell is
/// rough-moving when its best score strictly exceeds the threshold and the
/// cell is occupied. Out-of-grid samples contribute zero.
RoughField fast_search(const Grid<float>& occupancy, const Grid<float>& filtered,
                       const SearchConfig& config, DetectStats* stats = nullptr, int workers = 1);

struct ExactMatchResult {
  CellOffset offset;
  double energy = 0.0;
  bool degenerate = false;  // every energy constant over the sector
};

/// Patch-energy minimization over the sector around one rough-moving cell.
/// A candidate (x, y) means "the content of this cell moved here from
/// (-x, -y)", so the previous-frame patch is sampled at cell - (x, y); the
/// returned offset is directly the cell's motion vector. Energies are
/// min-max normalized over the sector; ties break toward the smallest
/// displacement norm, then row-major order.
ExactMatchResult exact_match(const BevMaps& current, const BevMaps& previous, int row, int col,
                             const SectorSpace& sector, const SearchConfig& config,
                             std::uint64_t* energy_evals = nullptr);

/// Convolves the vector components with the zero-sum kernel (zero-padded
/// borders). A cell stays moving only if it was moving before and its
/// post-filter magnitude reaches the threshold; suppressed cells have their
/// vectors cleared. Scores are replaced by the post-filter magnitude.
MotionField lateral_inhibition(const MotionField& field, const InhibitionKernel& kernel,
                               double moving_magnitude_threshold, int workers = 1);

struct DetectOptions {
  int workers = 1;
  bool exhaustive = false;  // full-disc search at every occupied cell
};

/// One detection step against a previous frame already compensated into the
/// current sensor frame: low-pass -> fast search -> sector-restricted exact
/// match -> lateral inhibition. The state is stepped once with the current
/// occupancy (initialize it with the previous map for a two-frame pair).
MotionField detect_motion(const BevMaps& current, const BevMaps& previous, LowPassState& state,
                          const SearchConfig& config, const InhibitionKernel& kernel,
                          const DetectOptions& options = {}, DetectStats* stats = nullptr);

/// CSV rows (row, col, x, y, score, moving) for every cell carrying data.
void write_motion_field_csv(const std::filesystem::path& path, const MotionField& field);
MotionField read_motion_field_csv(const std::filesystem::path& path, int rows, int cols);

/// PPM flow rendering: hue encodes direction, saturation magnitude.
void write_flow_image(const std::filesystem::path& path, const MotionField& field,
                      double max_magnitude);

}  // namespace emdet
