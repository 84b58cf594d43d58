#pragma once

// Samples, feature schema, synthetic world generation and dataset files.

#include <array>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sstgcn/roadgraph.hpp"
#include "sstgcn/tensor.hpp"

namespace sstgcn::data {

using graph::FilterKind;
using graph::RoadId;
using graph::RoadNetwork;
using num::Matrix;

// ---------------------------------------------------------------------------
// Feature schema

struct FeatureRange {
  double lo;
  double hi;
};

// Clamp to [lo, hi] then min-max scale to [0, 1]. Requires lo < hi.
double normalize_feature(double raw, FeatureRange range);

namespace ranges {
inline constexpr FeatureRange kTimeOfDay{0.0, 1439.0};
inline constexpr FeatureRange kSunAltitude{0.0, 76.122};
inline constexpr FeatureRange kSunDiff{0.0, 180.0};
inline constexpr FeatureRange kLanes{1.0, 7.0};
inline constexpr FeatureRange kSpeedLimit{10.0, 110.0};
inline constexpr FeatureRange kLength{12.6924, 9101.8543};
inline constexpr FeatureRange kPoi{0.0, 10.0};
inline constexpr FeatureRange kTrafficSpeed{0.0, 110.0};
inline constexpr FeatureRange kRain{0.0, 64.7};
inline constexpr FeatureRange kTemperature{-18.5, 36.3};
inline constexpr FeatureRange kHumidity{11.0, 100.0};
inline constexpr FeatureRange kVisibility{33.0, 5000.0};
inline constexpr FeatureRange kDewPoint{-27.0, 26.4};
inline constexpr FeatureRange kCloud{0.0, 10.0};
inline constexpr FeatureRange kVaporPressure{0.7, 34.4};
inline constexpr FeatureRange kGroundTemp{-12.7, 58.7};
}  // namespace ranges

// Node feature columns.
namespace node_col {
inline constexpr std::size_t kSunDiff = 0;
inline constexpr std::size_t kLanes = 1;
inline constexpr std::size_t kSpeedLimit = 2;
inline constexpr std::size_t kLength = 3;
inline constexpr std::size_t kBump = 4;
inline constexpr std::size_t kCamera = 5;
inline constexpr std::size_t kPoiBegin = 6;
inline constexpr std::size_t kTrafficSpeed = 16;
inline constexpr std::size_t kFocus = 17;
}  // namespace node_col
inline constexpr std::size_t kNodeFeatureWidth = 18;

// Static columns: day-of-week one-hot(7), time-of-day, season one-hot(4),
// sun altitude, weather(8).
namespace static_col {
inline constexpr std::size_t kDayOfWeekBegin = 0;
inline constexpr std::size_t kTimeOfDay = 7;
inline constexpr std::size_t kSeasonBegin = 8;
inline constexpr std::size_t kSunAltitude = 12;
inline constexpr std::size_t kWeatherBegin = 13;
}  // namespace static_col
inline constexpr std::size_t kStaticWidth = 21;
inline constexpr std::size_t kWeatherWidth = 8;

enum WeatherField : std::size_t {
  kRain,
  kTemperature,
  kHumidity,
  kVisibility,
  kDewPoint,
  kCloud,
  kVaporPressure,
  kGroundTemp,
};

inline constexpr std::array<FeatureRange, kWeatherWidth> kWeatherRanges = {
    ranges::kRain,     ranges::kTemperature, ranges::kHumidity,      ranges::kVisibility,
    ranges::kDewPoint, ranges::kCloud,       ranges::kVaporPressure, ranges::kGroundTemp};

// Minimal angle in [0, 180] between solar azimuth and road heading.
double sun_road_angle(double azimuth_deg, double heading_deg);

// 0 spring (Mar-May), 1 summer, 2 autumn, 3 winter (Dec-Feb).
int season_of_month(unsigned month);

// ---------------------------------------------------------------------------
// Dynamic streams

struct Accident {
  RoadId road{};
  int minute = 0;
  friend bool operator==(const Accident&, const Accident&) = default;
};

inline constexpr int kSpeedBinMinutes = 5;
inline constexpr int kMinutesPerDay = 1440;

class DynamicStreams {
 public:
  DynamicStreams() = default;
  DynamicStreams(std::chrono::sys_days start, int minutes, std::vector<RoadId> roads);

  std::chrono::sys_days start() const { return start_; }
  int minutes() const { return minutes_; }
  const std::vector<RoadId>& roads() const { return roads_; }

  // Speed stored per 5-minute bin; any minute of the bin returns the same value.
  double speed(std::size_t road_index, int minute) const;
  void set_bin_speed(std::size_t road_index, int bin, double kmh);
  int bins() const { return bins_; }

  std::span<const double> weather(int minute) const;
  void set_weather(int minute, const std::array<double, kWeatherWidth>& values);

  double sun_altitude(int minute) const;
  double sun_azimuth(int minute) const;
  void set_sun(int minute, double altitude_deg, double azimuth_deg);

  void add_accident(Accident a);
  const std::vector<Accident>& accidents() const { return accidents_; }
  // Any accident on the road with minute in (begin, end].
  bool accident_in(std::size_t road_index, int begin_exclusive, int end_inclusive) const;

  // Throws DataGapError when the minute is outside the stream.
  void require_minute(int minute) const;

  std::string to_json() const;

 private:
  std::chrono::sys_days start_{};
  int minutes_ = 0;
  int bins_ = 0;
  std::vector<RoadId> roads_;
  std::vector<double> speed_;    // [bin][road]
  std::vector<double> weather_;  // [minute][8]
  std::vector<double> altitude_;
  std::vector<double> azimuth_;
  std::vector<Accident> accidents_;
  std::vector<std::vector<int>> accident_minutes_;  // sorted per road
};

// ---------------------------------------------------------------------------
// Samples

struct GraphSlice {
  Matrix features;  // nodes x 18
  std::shared_ptr<const Matrix> laplacian;
};

struct Sample {
  int label = 0;
  RoadId center{};
  int t = 0;
  int n = 1;
  int k = 1;
  std::vector<RoadId> nodes;
  std::vector<GraphSlice> slices;  // ascending time t-(n-1)k .. t
  std::vector<Matrix> statics;     // 1 x 21 each

  const Matrix& laplacian() const { return *slices.front().laplacian; }
  std::size_t node_count() const { return nodes.size(); }
  int slice_time(std::size_t i) const { return t - (n - 1 - static_cast<int>(i)) * k; }
};

using SampleSet = std::vector<Sample>;

struct WindowSpec {
  int n = 3;      // sequence number
  int k = 5;      // interval in minutes
  int khop = 2;
  FilterKind filter = FilterKind::kDistanceLaplacian;
};

Sample build_sample(const RoadNetwork& net, const DynamicStreams& streams, RoadId center, int t,
                    const WindowSpec& window);
// Same, with the subgraph already extracted for `center`.
Sample build_sample(const RoadNetwork& net, const DynamicStreams& streams,
                    const graph::Subgraph& subgraph, int t, const WindowSpec& window);

// Static feature row for one minute.
Matrix static_features(const DynamicStreams& streams, int minute);

// ---------------------------------------------------------------------------
// Synthetic world

struct HazardCoefficients {
  double base_logit = -4.8;
  double rain = 1.5;
  double visibility = 1.5;
  double speed = 6.0;
  double night = 0.8;
  double neighbor_speed = -14.0;
};

struct GeneratorConfig {
  std::uint64_t seed = 7;
  int n_roads = 100;
  int days = 20;
  std::string start_date = "2020-01-01";
  HazardCoefficients hazard;
  WindowSpec window;

  static GeneratorConfig from_json(std::string_view text);
  static GeneratorConfig load(const std::string& path);
  std::string to_json() const;
};

std::chrono::sys_days parse_date(std::string_view iso);

RoadNetwork generate_synthetic_network(std::uint64_t seed, int n_roads);

DynamicStreams generate_planted_streams(std::uint64_t seed, const RoadNetwork& net, int days,
                                        const HazardCoefficients& hazard = {},
                                        std::string_view start_date = "2020-01-01");

// One positive per usable accident plus the same number of accident-free
// negatives drawn uniformly over (road, minute).
SampleSet assemble_dataset(const RoadNetwork& net, const DynamicStreams& streams,
                           const WindowSpec& window, std::uint64_t seed);

struct Split {
  SampleSet train;
  SampleSet val;
  SampleSet test;
};

// Stratified 8:1:1.
Split split_dataset(const SampleSet& set, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Files

inline constexpr int kDatasetFormatVersion = 1;

std::string sample_to_json_line(const Sample& s);
Sample sample_from_json_line(std::string_view line);

void save_dataset(const SampleSet& set, const std::string& path);
SampleSet load_dataset(const std::string& path);

}  // namespace sstgcn::data
