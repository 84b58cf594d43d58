#include "sstgcn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "sstgcn/errors.hpp"

namespace sstgcn::data {

using nlohmann::json;
namespace chr = std::chrono;

// ---------------------------------------------------------------------------
// Schema helpers

double normalize_feature(double raw, FeatureRange range) {
  if (!(range.lo < range.hi)) throw ContractError("feature range must satisfy min < max");
  const double clamped = std::clamp(raw, range.lo, range.hi);
  return (clamped - range.lo) / (range.hi - range.lo);
}

double sun_road_angle(double azimuth_deg, double heading_deg) {
  double d = std::fmod(std::abs(azimuth_deg - heading_deg), 360.0);
  if (d > 180.0) d = 360.0 - d;
  return d;
}

int season_of_month(unsigned month) {
  if (month >= 3 && month <= 5) return 0;
  if (month >= 6 && month <= 8) return 1;
  if (month >= 9 && month <= 11) return 2;
  return 3;
}

chr::sys_days parse_date(std::string_view iso) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  auto parse_part = [&iso](std::size_t pos, std::size_t len, auto& out) {
    const char* first = iso.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, out);
    return ec == std::errc() && ptr == first + len;
  };
  if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' || !parse_part(0, 4, y) ||
      !parse_part(5, 2, m) || !parse_part(8, 2, d)) {
    throw ConfigError("date must be YYYY-MM-DD, got '" + std::string(iso) + "'");
  }
  const chr::year_month_day ymd{chr::year{y}, chr::month{m}, chr::day{d}};
  if (!ymd.ok()) throw ConfigError("invalid calendar date '" + std::string(iso) + "'");
  return chr::sys_days{ymd};
}

namespace {

std::string format_date(chr::sys_days day) {
  const chr::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// DynamicStreams

DynamicStreams::DynamicStreams(chr::sys_days start, int minutes, std::vector<RoadId> roads)
    : start_(start),
      minutes_(minutes),
      bins_((minutes + kSpeedBinMinutes - 1) / kSpeedBinMinutes),
      roads_(std::move(roads)),
      speed_(static_cast<std::size_t>(bins_) * roads_.size(), 0.0),
      weather_(static_cast<std::size_t>(minutes) * kWeatherWidth, 0.0),
      altitude_(minutes, 0.0),
      azimuth_(minutes, 0.0),
      accident_minutes_(roads_.size()) {}

void DynamicStreams::require_minute(int minute) const {
  if (minute < 0 || minute >= minutes_) {
    throw DataGapError("stream has no data for minute " + std::to_string(minute) + " (covers 0.." +
                       std::to_string(minutes_ - 1) + ")");
  }
}

double DynamicStreams::speed(std::size_t road_index, int minute) const {
  require_minute(minute);
  return speed_[static_cast<std::size_t>(minute / kSpeedBinMinutes) * roads_.size() + road_index];
}

void DynamicStreams::set_bin_speed(std::size_t road_index, int bin, double kmh) {
  speed_.at(static_cast<std::size_t>(bin) * roads_.size() + road_index) = kmh;
}

std::span<const double> DynamicStreams::weather(int minute) const {
  require_minute(minute);
  return {weather_.data() + static_cast<std::size_t>(minute) * kWeatherWidth, kWeatherWidth};
}

void DynamicStreams::set_weather(int minute, const std::array<double, kWeatherWidth>& values) {
  require_minute(minute);
  std::copy(values.begin(), values.end(),
            weather_.begin() + static_cast<std::ptrdiff_t>(minute) * kWeatherWidth);
}

double DynamicStreams::sun_altitude(int minute) const {
  require_minute(minute);
  return altitude_[minute];
}

double DynamicStreams::sun_azimuth(int minute) const {
  require_minute(minute);
  return azimuth_[minute];
}

void DynamicStreams::set_sun(int minute, double altitude_deg, double azimuth_deg) {
  require_minute(minute);
  altitude_[minute] = altitude_deg;
  azimuth_[minute] = azimuth_deg;
}

void DynamicStreams::add_accident(Accident a) {
  require_minute(a.minute);
  auto pos = std::find(roads_.begin(), roads_.end(), a.road);
  if (pos == roads_.end()) throw LookupError("accident on unknown road " + std::to_string(to_int(a.road)));
  auto& list = accident_minutes_[static_cast<std::size_t>(pos - roads_.begin())];
  list.insert(std::upper_bound(list.begin(), list.end(), a.minute), a.minute);
  accidents_.push_back(a);
}

bool DynamicStreams::accident_in(std::size_t road_index, int begin_exclusive,
                                 int end_inclusive) const {
  const auto& list = accident_minutes_.at(road_index);
  auto it = std::upper_bound(list.begin(), list.end(), begin_exclusive);
  return it != list.end() && *it <= end_inclusive;
}

std::string DynamicStreams::to_json() const {
  json doc;
  doc["start_date"] = format_date(start_);
  doc["minutes"] = minutes_;
  doc["speed_bin_minutes"] = kSpeedBinMinutes;
  json ids = json::array();
  for (RoadId id : roads_) ids.push_back(graph::to_int(id));
  doc["roads"] = ids;
  json speeds = json::array();
  for (int b = 0; b < bins_; ++b) {
    auto first = speed_.begin() + static_cast<std::ptrdiff_t>(b) * static_cast<std::ptrdiff_t>(roads_.size());
    speeds.push_back(std::vector<double>(first, first + static_cast<std::ptrdiff_t>(roads_.size())));
  }
  doc["speed"] = speeds;
  json weather = json::array();
  for (int m = 0; m < minutes_; ++m) {
    auto w = this->weather(m);
    weather.push_back(std::vector<double>(w.begin(), w.end()));
  }
  doc["weather"] = weather;
  doc["sun_altitude"] = altitude_;
  doc["sun_azimuth"] = azimuth_;
  json acc = json::array();
  for (const auto& a : accidents_) acc.push_back({graph::to_int(a.road), a.minute});
  doc["accidents"] = acc;
  return doc.dump();
}

// ---------------------------------------------------------------------------
// Sample construction

Matrix static_features(const DynamicStreams& streams, int minute) {
  Matrix s(1, kStaticWidth);
  const chr::sys_days day = streams.start() + chr::days{minute / kMinutesPerDay};
  const int minute_of_day = minute % kMinutesPerDay;
  const unsigned iso_weekday = chr::weekday{day}.iso_encoding();  // 1 = Monday
  s[static_col::kDayOfWeekBegin + iso_weekday - 1] = 1.0;
  s[static_col::kTimeOfDay] = normalize_feature(minute_of_day, ranges::kTimeOfDay);
  const unsigned month = static_cast<unsigned>(chr::year_month_day{day}.month());
  s[static_col::kSeasonBegin + static_cast<std::size_t>(season_of_month(month))] = 1.0;
  s[static_col::kSunAltitude] = normalize_feature(streams.sun_altitude(minute), ranges::kSunAltitude);
  const auto weather = streams.weather(minute);
  for (std::size_t i = 0; i < kWeatherWidth; ++i)
    s[static_col::kWeatherBegin + i] = normalize_feature(weather[i], kWeatherRanges[i]);
  return s;
}

namespace {

void validate_window(const WindowSpec& w) {
  if (w.n < 1) throw ContractError("sequence number n must be >= 1");
  if (w.k < 1) throw ContractError("interval k must be >= 1");
  if (w.khop < 1) throw ContractError("K-hop must be >= 1");
}

}  // namespace

Sample build_sample(const RoadNetwork& net, const DynamicStreams& streams, RoadId center, int t,
                    const WindowSpec& window) {
  validate_window(window);
  return build_sample(net, streams, graph::build_subgraph(net, center, window.khop, window.filter),
                      t, window);
}

Sample build_sample(const RoadNetwork& net, const DynamicStreams& streams,
                    const graph::Subgraph& subgraph, int t, const WindowSpec& window) {
  validate_window(window);
  const int first = t - (window.n - 1) * window.k;
  if (first < 0) {
    throw RangeError("window underflow: t - (n-1)k = " + std::to_string(first) + " < 0");
  }
  streams.require_minute(t);
  streams.require_minute(t + window.k);

  Sample s;
  s.center = subgraph.nodes.at(subgraph.center_index);
  s.t = t;
  s.n = window.n;
  s.k = window.k;
  s.nodes = subgraph.nodes;
  auto laplacian = std::make_shared<const Matrix>(subgraph.laplacian);

  std::vector<std::size_t> idx;
  idx.reserve(s.nodes.size());
  for (RoadId id : s.nodes) idx.push_back(net.index_of(id));
  const std::size_t center_stream_index = idx[subgraph.center_index];

  for (int q = 0; q < window.n; ++q) {
    const int minute = first + q * window.k;
    Matrix v(s.nodes.size(), kNodeFeatureWidth);
    const double azimuth = streams.sun_azimuth(minute);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto& a = net.road(idx[i]).attributes;
      v(i, node_col::kSunDiff) =
          normalize_feature(sun_road_angle(azimuth, a.heading_deg), ranges::kSunDiff);
      v(i, node_col::kLanes) = normalize_feature(a.lanes, ranges::kLanes);
      v(i, node_col::kSpeedLimit) = normalize_feature(a.speed_limit, ranges::kSpeedLimit);
      v(i, node_col::kLength) = normalize_feature(a.length_m, ranges::kLength);
      v(i, node_col::kBump) = a.bump ? 1.0 : 0.0;
      v(i, node_col::kCamera) = a.camera ? 1.0 : 0.0;
      for (std::size_t p = 0; p < graph::kPoiCategories; ++p)
        v(i, node_col::kPoiBegin + p) = normalize_feature(a.poi[p], ranges::kPoi);
      v(i, node_col::kTrafficSpeed) =
          normalize_feature(streams.speed(idx[i], minute), ranges::kTrafficSpeed);
      v(i, node_col::kFocus) = i == subgraph.center_index ? 1.0 : 0.0;
    }
    s.slices.push_back({std::move(v), laplacian});
    s.statics.push_back(static_features(streams, minute));
  }
  s.label = streams.accident_in(center_stream_index, t, t + window.k) ? 1 : 0;
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic world

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

double bump(double x, double center, double width) {
  const double z = (x - center) / width;
  return std::exp(-0.5 * z * z);
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

RoadNetwork generate_synthetic_network(std::uint64_t seed, int n_roads) {
  if (n_roads < 2) throw ContractError("n_roads must be >= 2");
  auto rng = make_rng(seed, 0x6e6574);
  const auto n = static_cast<std::size_t>(n_roads);
  const auto width = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));

  RoadNetwork net;
  std::uniform_int_distribution<int> lanes(1, 7);
  std::uniform_int_distribution<int> limit_step(1, 11);
  std::uniform_real_distribution<double> length(ranges::kLength.lo, ranges::kLength.hi);
  std::bernoulli_distribution facility(0.3);
  std::uniform_int_distribution<int> poi(0, 10);
  std::uniform_real_distribution<double> heading(0.0, 360.0);
  for (std::size_t i = 0; i < n; ++i) {
    graph::Road road;
    road.id = RoadId{static_cast<std::int64_t>(i + 1)};
    auto& a = road.attributes;
    a.lanes = lanes(rng);
    a.speed_limit = 10.0 * limit_step(rng);
    a.length_m = length(rng);
    a.bump = facility(rng);
    a.camera = facility(rng);
    for (auto& c : a.poi) c = poi(rng);
    a.heading_deg = heading(rng);
    net.add_road(std::move(road));
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % width;
    if (c + 1 < width && i + 1 < n) edges.emplace_back(i, i + 1);
    if (i + width < n) edges.emplace_back(i, i + width);
  }
  // Random spanning tree keeps the grid connected; other edges survive with p = 0.6.
  std::shuffle(edges.begin(), edges.end(), rng);
  DisjointSet dsu(n);
  std::bernoulli_distribution keep(0.6);
  std::vector<std::pair<std::size_t, std::size_t>> kept;
  for (auto [u, v] : edges) {
    if (dsu.unite(u, v) || keep(rng)) kept.emplace_back(u, v);
  }
  std::sort(kept.begin(), kept.end());
  for (auto [u, v] : kept) net.add_edge(net.road(u).id, net.road(v).id);
  return net;
}

DynamicStreams generate_planted_streams(std::uint64_t seed, const RoadNetwork& net, int days,
                                        const HazardCoefficients& hazard,
                                        std::string_view start_date) {
  if (days < 1) throw ContractError("days must be >= 1");
  const chr::sys_days start = parse_date(start_date);
  const int minutes = days * kMinutesPerDay;
  const std::size_t roads = net.size();
  std::vector<RoadId> ids;
  for (const auto& r : net.roads()) ids.push_back(r.id);
  DynamicStreams streams(start, minutes, ids);

  // Sun: altitude follows a half-sine between sunrise and sunset, peak varies
  // with day of year; azimuth sweeps 90 -> 180 -> 270 across the day.
  const double two_pi = 2.0 * std::numbers::pi;
  for (int m = 0; m < minutes; ++m) {
    const chr::sys_days day = start + chr::days{m / kMinutesPerDay};
    const chr::year_month_day ymd{day};
    const int doy =
        (day - chr::sys_days{chr::year_month_day{ymd.year(), chr::January, chr::day{1}}}).count();
    const double seasonal = std::cos(two_pi * (doy - 172) / 365.0);  // 1 at midsummer
    const double peak = std::clamp(52.0 + 24.0 * seasonal, 0.0, ranges::kSunAltitude.hi);
    const double half_day = 360.0 + 75.0 * seasonal;  // minutes from noon to sunset
    const double tod = m % kMinutesPerDay;
    const double from_noon = tod - 720.0;
    double altitude = 0.0;
    if (std::abs(from_noon) < half_day) altitude = peak * std::cos(from_noon / half_day * std::numbers::pi / 2.0);
    const double azimuth = std::fmod(tod / kMinutesPerDay * 360.0, 360.0);
    streams.set_sun(m, std::clamp(altitude, 0.0, ranges::kSunAltitude.hi), azimuth);
  }

  // Weather: daily/seasonal sinusoids plus autoregressive noise, with a
  // two-state rain regime driving humidity, cloud and visibility.
  auto wrng = make_rng(seed, 0x77656174);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  bool raining = false;
  double temp_noise = 0.0;
  double rain_noise = 0.0;
  double humid_noise = 0.0;
  double cloud_noise = 0.0;
  for (int m = 0; m < minutes; ++m) {
    const chr::sys_days day = start + chr::days{m / kMinutesPerDay};
    const chr::year_month_day ymd{day};
    const int doy =
        (day - chr::sys_days{chr::year_month_day{ymd.year(), chr::January, chr::day{1}}}).count();
    const double tod = m % kMinutesPerDay;
    if (raining ? unit(wrng) < 1.0 / 240.0 : unit(wrng) < 1.0 / 2400.0) raining = !raining;
    temp_noise = 0.998 * temp_noise + 0.06 * gauss(wrng);
    rain_noise = 0.99 * rain_noise + 0.1 * gauss(wrng);
    humid_noise = 0.995 * humid_noise + 0.3 * gauss(wrng);
    cloud_noise = 0.995 * cloud_noise + 0.1 * gauss(wrng);

    std::array<double, kWeatherWidth> w{};
    const double temperature = 12.5 - 14.0 * std::cos(two_pi * (doy - 15) / 365.0) +
                               5.0 * std::sin(two_pi * (tod - 540.0) / kMinutesPerDay) + temp_noise;
    const double rain = raining ? std::exp(1.2 + rain_noise) : 0.0;
    const double humidity = 62.0 + (raining ? 25.0 : 0.0) -
                            12.0 * std::sin(two_pi * (tod - 540.0) / kMinutesPerDay) + humid_noise;
    const double hum_c = std::clamp(humidity, ranges::kHumidity.lo, ranges::kHumidity.hi);
    const double fog = hum_c > 90.0 ? (hum_c - 90.0) * 300.0 : 0.0;
    const double visibility = (4800.0 - fog) * std::exp(-rain / 6.0);
    const double dew_point = temperature - (100.0 - hum_c) / 5.0;
    const double vapor = 6.11 * std::pow(10.0, 7.5 * dew_point / (237.3 + dew_point));
    const double cloud = std::round(3.0 + (raining ? 6.0 : 0.0) + 2.0 * cloud_noise);
    const double ground = temperature + 12.0 * streams.sun_altitude(m) / ranges::kSunAltitude.hi;

    w[kRain] = rain;
    w[kTemperature] = temperature;
    w[kHumidity] = hum_c;
    w[kVisibility] = visibility;
    w[kDewPoint] = dew_point;
    w[kCloud] = cloud;
    w[kVaporPressure] = vapor;
    w[kGroundTemp] = ground;
    for (std::size_t i = 0; i < kWeatherWidth; ++i)
      w[i] = std::clamp(w[i], kWeatherRanges[i].lo, kWeatherRanges[i].hi);
    streams.set_weather(m, w);
  }

  // Traffic speed per 5-minute bin: free-flow ratio minus rush-hour
  // congestion, rain slowdown, spatially smoothed AR noise and jams that
  // spill half their strength onto neighbours.
  auto srng = make_rng(seed, 0x7370656564);
  std::uniform_real_distribution<double> free_flow(0.7, 1.0);
  std::uniform_real_distribution<double> sensitivity(0.5, 1.5);
  std::vector<double> flow(roads), sens(roads), shock(roads, 0.0), smooth(roads, 0.0);
  std::vector<int> jam_left(roads, 0);
  std::vector<double> jam(roads, 0.0);
  for (std::size_t r = 0; r < roads; ++r) {
    flow[r] = free_flow(srng);
    sens[r] = sensitivity(srng);
  }
  std::bernoulli_distribution jam_start(0.004);
  std::geometric_distribution<int> jam_length(1.0 / 8.0);
  const int bins = streams.bins();
  std::vector<double> ratio(static_cast<std::size_t>(bins) * roads);
  for (int b = 0; b < bins; ++b) {
    const int minute = b * kSpeedBinMinutes;
    const chr::sys_days day = start + chr::days{minute / kMinutesPerDay};
    const bool weekend = chr::weekday{day}.iso_encoding() >= 6;
    const double tod = minute % kMinutesPerDay;
    const double rush = (weekend ? 0.4 : 1.0) * (0.35 * bump(tod, 480.0, 60.0) + 0.4 * bump(tod, 1080.0, 75.0));
    const double rain_slow = std::min(0.2, 0.02 * streams.weather(minute)[kRain]);
    for (std::size_t r = 0; r < roads; ++r) {
      shock[r] = 0.9 * shock[r] + 0.06 * gauss(srng);
      if (jam_left[r] > 0) {
        --jam_left[r];
      } else if (jam_start(srng)) {
        jam_left[r] = 1 + jam_length(srng);
      }
    }
    for (std::size_t r = 0; r < roads; ++r) {
      double nb_shock = 0.0;
      double nb_jam = 0.0;
      const auto& nbrs = net.neighbors(r);
      for (std::size_t v : nbrs) {
        nb_shock += shock[v];
        nb_jam = std::max(nb_jam, jam_left[v] > 0 ? 0.25 : 0.0);
      }
      if (!nbrs.empty()) nb_shock /= static_cast<double>(nbrs.size());
      smooth[r] = 0.5 * shock[r] + 0.5 * nb_shock;
      jam[r] = std::max(jam_left[r] > 0 ? 0.5 : 0.0, nb_jam);
    }
    for (std::size_t r = 0; r < roads; ++r) {
      const double x = std::clamp(flow[r] - sens[r] * rush - rain_slow + smooth[r] - jam[r], 0.05, 1.2);
      const double limit = net.road(r).attributes.speed_limit;
      const double kmh = std::clamp(x * limit, ranges::kTrafficSpeed.lo, ranges::kTrafficSpeed.hi);
      streams.set_bin_speed(r, b, kmh);
      ratio[static_cast<std::size_t>(b) * roads + r] = kmh / limit;
    }
  }

  // Accidents: Bernoulli per road-minute with a logistic hazard. Speed enters
  // as a fraction of the limit, for the road itself and averaged over its
  // 1-hop neighbours (a road without neighbours uses its own fraction).
  auto arng = make_rng(seed, 0x616363);
  for (int m = 0; m < minutes; ++m) {
    const int b = m / kSpeedBinMinutes;
    const auto w = streams.weather(m);
    const double rain_term = std::min(1.0, w[kRain] / 10.0);
    const double vis_term = std::min(1.0, 250.0 / w[kVisibility]);
    const double night = streams.sun_altitude(m) <= 0.0 ? 1.0 : 0.0;
    const double shared = hazard.base_logit + hazard.rain * rain_term +
                          hazard.visibility * vis_term + hazard.night * night;
    const double* row = &ratio[static_cast<std::size_t>(b) * roads];
    for (std::size_t r = 0; r < roads; ++r) {
      const auto& nbrs = net.neighbors(r);
      double nb = 0.0;
      for (std::size_t v : nbrs) nb += row[v];
      nb = nbrs.empty() ? row[r] : nb / static_cast<double>(nbrs.size());
      const double p = logistic(shared + hazard.speed * row[r] + hazard.neighbor_speed * nb);
      if (unit(arng) < p) streams.add_accident({ids[r], m});
    }
  }
  return streams;
}

// ---------------------------------------------------------------------------
// Config

namespace {

template <typename T>
void read_if(const json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

GeneratorConfig GeneratorConfig::from_json(std::string_view text) {
  GeneratorConfig cfg;
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw ConfigError("generator config must be a JSON object");
    read_if(doc, "seed", cfg.seed);
    read_if(doc, "n_roads", cfg.n_roads);
    read_if(doc, "days", cfg.days);
    read_if(doc, "start_date", cfg.start_date);
    if (doc.contains("hazard")) {
      const auto& h = doc.at("hazard");
      read_if(h, "base_logit", cfg.hazard.base_logit);
      read_if(h, "rain", cfg.hazard.rain);
      read_if(h, "visibility", cfg.hazard.visibility);
      read_if(h, "speed", cfg.hazard.speed);
      read_if(h, "night", cfg.hazard.night);
      read_if(h, "neighbor_speed", cfg.hazard.neighbor_speed);
    }
    read_if(doc, "khop", cfg.window.khop);
    read_if(doc, "seq_num", cfg.window.n);
    read_if(doc, "interval", cfg.window.k);
    if (doc.contains("filter")) cfg.window.filter = graph::parse_filter_flag(doc.at("filter").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  if (cfg.n_roads < 2) throw ConfigError("generator config: n_roads must be >= 2");
  if (cfg.days < 1) throw ConfigError("generator config: days must be >= 1");
  if (cfg.window.khop < 1 || cfg.window.n < 1 || cfg.window.k < 1)
    throw ConfigError("generator config: khop, seq_num and interval must be >= 1");
  parse_date(cfg.start_date);
  return cfg;
}

GeneratorConfig GeneratorConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open generator config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

std::string GeneratorConfig::to_json() const {
  json doc{{"seed", seed},
           {"n_roads", n_roads},
           {"days", days},
           {"start_date", start_date},
           {"hazard",
            {{"base_logit", hazard.base_logit},
             {"rain", hazard.rain},
             {"visibility", hazard.visibility},
             {"speed", hazard.speed},
             {"night", hazard.night},
             {"neighbor_speed", hazard.neighbor_speed}}},
           {"khop", window.khop},
           {"seq_num", window.n},
           {"interval", window.k},
           {"filter", std::string(graph::filter_flag(window.filter))}};
  return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Assembly and splitting

SampleSet assemble_dataset(const RoadNetwork& net, const DynamicStreams& streams,
                           const WindowSpec& window, std::uint64_t seed) {
  validate_window(window);
  const int t_min = (window.n - 1) * window.k;
  const int t_max = streams.minutes() - 1 - window.k;

  std::vector<Accident> usable;
  for (const auto& a : streams.accidents()) {
    const int t = a.minute - window.k;
    if (t >= t_min && t <= t_max) usable.push_back(a);
  }
  std::sort(usable.begin(), usable.end(), [](const Accident& x, const Accident& y) {
    return x.minute != y.minute ? x.minute < y.minute : to_int(x.road) < to_int(y.road);
  });
  if (usable.empty()) throw EmptyDatasetError("no accidents fall inside a usable sample window");

  std::unordered_map<std::size_t, graph::Subgraph> cache;
  auto subgraph_for = [&](std::size_t road_index) -> const graph::Subgraph& {
    auto it = cache.find(road_index);
    if (it == cache.end()) {
      it = cache.emplace(road_index, graph::build_subgraph(net, net.road(road_index).id,
                                                           window.khop, window.filter))
               .first;
    }
    return it->second;
  };

  SampleSet out;
  out.reserve(usable.size() * 2);
  for (const auto& a : usable) {
    out.push_back(build_sample(net, streams, subgraph_for(net.index_of(a.road)),
                               a.minute - window.k, window));
  }

  auto rng = make_rng(seed, 0x6e6567);
  std::uniform_int_distribution<std::size_t> pick_road(0, net.size() - 1);
  std::uniform_int_distribution<int> pick_t(t_min, t_max);
  std::size_t negatives = 0;
  std::size_t attempts = 0;
  const std::size_t max_attempts = usable.size() * 1000 + 1000;
  while (negatives < usable.size()) {
    if (++attempts > max_attempts) {
      throw EmptyDatasetError("could not find enough accident-free windows for negatives");
    }
    const std::size_t r = pick_road(rng);
    const int t = pick_t(rng);
    if (streams.accident_in(r, t, t + window.k)) continue;
    out.push_back(build_sample(net, streams, subgraph_for(r), t, window));
    ++negatives;
  }
  return out;
}

Split split_dataset(const SampleSet& set, std::uint64_t seed) {
  if (set.size() < 10) {
    throw SizeError("need at least 10 samples to split, got " + std::to_string(set.size()));
  }
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < set.size(); ++i) (set[i].label == 1 ? pos : neg).push_back(i);

  auto rng = make_rng(seed, 0x73706c);
  Split split;
  for (auto* cls : {&pos, &neg}) {
    std::shuffle(cls->begin(), cls->end(), rng);
    const std::size_t c = cls->size();
    const auto tenth = static_cast<std::size_t>(std::lround(static_cast<double>(c) * 0.1));
    for (std::size_t i = 0; i < c; ++i) {
      const Sample& s = set[(*cls)[i]];
      if (i < tenth) {
        split.val.push_back(s);
      } else if (i < 2 * tenth) {
        split.test.push_back(s);
      } else {
        split.train.push_back(s);
      }
    }
  }
  if (split.train.empty() || split.val.empty() || split.test.empty())
    throw SizeError("split produced an empty partition");
  return split;
}

// ---------------------------------------------------------------------------
// JSON-Lines

namespace {

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix rows_matrix(const json& rows, std::size_t expect_rows, std::size_t expect_cols,
                   const char* what) {
  if (!rows.is_array() || rows.size() != expect_rows)
    throw ParseError(std::string(what) + ": expected " + std::to_string(expect_rows) + " rows");
  Matrix m(expect_rows, expect_cols);
  for (std::size_t i = 0; i < expect_rows; ++i) {
    const auto& row = rows[i];
    if (!row.is_array() || row.size() != expect_cols)
      throw ParseError(std::string(what) + ": expected " + std::to_string(expect_cols) + " columns");
    for (std::size_t j = 0; j < expect_cols; ++j) m(i, j) = row[j].get<double>();
  }
  return m;
}

}  // namespace

std::string sample_to_json_line(const Sample& s) {
  json doc;
  doc["version"] = kDatasetFormatVersion;
  doc["label"] = s.label;
  doc["center"] = graph::to_int(s.center);
  doc["t"] = s.t;
  doc["n"] = s.n;
  doc["k"] = s.k;
  json nodes = json::array();
  for (RoadId id : s.nodes) nodes.push_back(graph::to_int(id));
  doc["nodes"] = nodes;
  doc["L"] = matrix_rows(s.laplacian());
  json slices = json::array();
  for (const auto& sl : s.slices) slices.push_back(matrix_rows(sl.features));
  doc["slices"] = slices;
  json statics = json::array();
  for (const auto& st : s.statics) statics.push_back(matrix_rows(st)[0]);
  doc["statics"] = statics;
  return doc.dump();
}

Sample sample_from_json_line(std::string_view line) {
  Sample s;
  try {
    const json doc = json::parse(line);
    if (!doc.is_object() || !doc.contains("version"))
      throw ParseError("missing version field");
    const int version = doc.at("version").get<int>();
    if (version != kDatasetFormatVersion)
      throw ParseError("unknown dataset format version " + std::to_string(version));
    s.label = doc.at("label").get<int>();
    if (s.label != 0 && s.label != 1) throw ParseError("label must be 0 or 1");
    s.center = RoadId{doc.at("center").get<std::int64_t>()};
    s.t = doc.at("t").get<int>();
    s.n = doc.at("n").get<int>();
    s.k = doc.at("k").get<int>();
    if (s.n < 1 || s.k < 1) throw ParseError("n and k must be >= 1");
    for (const auto& id : doc.at("nodes")) s.nodes.push_back(RoadId{id.get<std::int64_t>()});
    const std::size_t count = s.nodes.size();
    if (count == 0) throw ParseError("sample has no nodes");
    auto laplacian = std::make_shared<const Matrix>(rows_matrix(doc.at("L"), count, count, "L"));
    const auto& slices = doc.at("slices");
    const auto& statics = doc.at("statics");
    if (!slices.is_array() || slices.size() != static_cast<std::size_t>(s.n))
      throw ParseError("slices count must equal n");
    if (!statics.is_array() || statics.size() != static_cast<std::size_t>(s.n))
      throw ParseError("statics count must equal n");
    for (const auto& sl : slices)
      s.slices.push_back({rows_matrix(sl, count, kNodeFeatureWidth, "slice"), laplacian});
    for (const auto& st : statics)
      s.statics.push_back(rows_matrix(json::array({st}), 1, kStaticWidth, "static"));
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
  return s;
}

void save_dataset(const SampleSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset file " + path);
  for (const auto& s : set) out << sample_to_json_line(s) << '\n';
  if (!out) throw Error("write failed for dataset file " + path);
}

SampleSet load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset file " + path);
  SampleSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      set.push_back(sample_from_json_line(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return set;
}

}  // namespace sstgcn::data
