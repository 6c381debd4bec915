#include "negmm/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace negmm {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double to_double(const std::string& s, int row, const std::string& col) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error("row " + std::to_string(row) + ": column '" + col +
                             "' is not numeric: '" + s + "'");
  }
  if (!std::isfinite(v))
    throw std::runtime_error("row " + std::to_string(row) + ": column '" + col +
                             "' is not finite");
  return v;
}

struct C7Table {
  std::vector<double> freqs;
  std::vector<double> c7;

  // exact match, otherwise linear interpolation in ln f (flagged by caller)
  std::pair<double, bool> at(double f) const {
    for (std::size_t i = 0; i < freqs.size(); ++i)
      if (std::abs(freqs[i] - f) <= 1e-9 * std::max(1.0, f)) return {c7[i], false};
    if (freqs.empty()) throw std::runtime_error("empty c7 table");
    if (f <= freqs.front()) return {c7.front(), true};
    if (f >= freqs.back()) return {c7.back(), true};
    for (std::size_t i = 1; i < freqs.size(); ++i) {
      if (f <= freqs[i]) {
        const double t = (std::log(f) - std::log(freqs[i - 1])) /
                         (std::log(freqs[i]) - std::log(freqs[i - 1]));
        return {c7[i - 1] * (1.0 - t) + c7[i] * t, true};
      }
    }
    return {c7.back(), true};
  }
};

C7Table load_c7(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open c7 sidecar: " + path.string());
  nlohmann::json j;
  in >> j;
  C7Table t;
  t.freqs = j.at("freqs").get<std::vector<double>>();
  t.c7 = j.at("c7").get<std::vector<double>>();
  if (t.freqs.size() != t.c7.size())
    throw std::runtime_error("c7 sidecar freq/value length mismatch");
  return t;
}

}  // namespace

Dataset ingest_flatfile(const std::filesystem::path& csv,
                        const std::filesystem::path& c7_json, const IngestOptions& opt,
                        IngestReport* report) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot open flatfile: " + csv.string());
  const C7Table c7tab = load_c7(c7_json);
  const auto& polys =
      opt.polygons.empty() ? default_region_polygons() : opt.polygons;
  const UtmProjector proj(opt.zone);

  IngestReport local;
  IngestReport& rep = report ? *report : local;

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty flatfile (no header)");
  while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
  const auto header = split_line(line);
  std::map<std::string, int> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = static_cast<int>(i);
  const auto need = [&](const std::string& name) {
    const auto it = col.find(name);
    if (it == col.end())
      throw std::runtime_error("flatfile missing required column: " + name);
    return it->second;
  };
  const int c_ev = need("event_id"), c_st = need("station_id"), c_mag = need("mag");
  const int c_rrup = need("rrup_km"), c_vs30 = need("vs30");
  const int c_eqla = need("eq_lat"), c_eqlo = need("eq_lon");
  const int c_stla = need("sta_lat"), c_stlo = need("sta_lon");
  const int c_clla = need("cls_lat"), c_cllo = need("cls_lon");
  const int c_cldp = need("cls_depth_km");

  // residual columns define the frequency list
  std::vector<std::pair<double, int>> res_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].rfind("res_f", 0) == 0) {
      const double f = std::stod(header[i].substr(5));
      if (!opt.freqs) {
        res_cols.push_back({f, static_cast<int>(i)});
      } else {
        for (double want : *opt.freqs)
          if (std::abs(want - f) <= 1e-9 * std::max(1.0, f))
            res_cols.push_back({f, static_cast<int>(i)});
      }
    }
  }
  std::sort(res_cols.begin(), res_cols.end());
  if (res_cols.empty())
    throw std::runtime_error("flatfile has no usable res_f<freq> columns");

  Dataset data;
  for (const auto& [f, idx] : res_cols) {
    data.freqs.push_back(f);
    const auto [v, interpolated] = c7tab.at(f);
    data.c7.push_back(v);
    if (interpolated)
      rep.warnings.push_back("c7 interpolated in log-frequency at " +
                             std::to_string(f) + " Hz (not in sidecar)");
  }

  struct Row {
    Record rec;
    std::string event_id, station_id;
    GeoPoint eq;
    std::vector<double> res;
    int rownum = 0;
  };
  std::vector<Row> rows;
  std::map<std::string, int> ev_index, st_index;

  int rownum = 0;
  XY lo{1e300, 1e300}, hi{-1e300, -1e300};
  const auto grow = [&](const XY& p) {
    lo.x = std::min(lo.x, p.x);
    lo.y = std::min(lo.y, p.y);
    hi.x = std::max(hi.x, p.x);
    hi.y = std::max(hi.y, p.y);
  };

  while (std::getline(in, line)) {
    ++rownum;
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n'))
      line.pop_back();
    if (line.empty()) continue;
    ++rep.rows_in;
    try {
      const auto f = split_line(line);
      if (f.size() < header.size())
        throw std::runtime_error("row " + std::to_string(rownum) + ": too few fields");
      Row row;
      row.rownum = rownum;
      row.event_id = f[c_ev];
      row.station_id = f[c_st];
      row.rec.mag = to_double(f[c_mag], rownum, "mag");
      const double rrup = to_double(f[c_rrup], rownum, "rrup_km");
      row.rec.vs30 = to_double(f[c_vs30], rownum, "vs30");
      row.eq = GeoPoint{to_double(f[c_eqla], rownum, "eq_lat"),
                        to_double(f[c_eqlo], rownum, "eq_lon")};
      const GeoPoint sta{to_double(f[c_stla], rownum, "sta_lat"),
                         to_double(f[c_stlo], rownum, "sta_lon")};
      const GeoPoint cls{to_double(f[c_clla], rownum, "cls_lat"),
                         to_double(f[c_cllo], rownum, "cls_lon")};
      row.rec.cls_depth = to_double(f[c_cldp], rownum, "cls_depth_km");

      const XY eq_xy = proj.forward(row.eq);
      const XY sta_xy = proj.forward(sta);
      row.rec.cls_xy = proj.forward(cls);
      const Ray3 ray{row.rec.cls_xy, row.rec.cls_depth, sta_xy, 0.0};
      const double len = ray.length();
      if (rrup > 0.0 && std::abs(len - rrup) > opt.rrup_tolerance_rel *
                                                   std::max(rrup, 1.0))
        throw std::runtime_error(
            "row " + std::to_string(rownum) +
            ": rrup_km inconsistent with coordinates (" + std::to_string(rrup) +
            " km in file vs " + std::to_string(len) + " km from the ray)");
      row.rec.r_rup = len > 0.0 ? len : rrup;
      if (!(row.rec.r_rup > 0.0))
        throw std::runtime_error("row " + std::to_string(rownum) +
                                 ": non-positive rupture distance");

      row.res.resize(res_cols.size());
      for (std::size_t k = 0; k < res_cols.size(); ++k)
        row.res[k] = to_double(f[res_cols[k].second], rownum,
                               header[res_cols[k].second]);

      // stash projected coordinates through the record until tables are built
      row.rec.event = -1;
      row.rec.station = -1;
      grow(eq_xy);
      grow(sta_xy);
      grow(row.rec.cls_xy);

      if (ev_index.find(row.event_id) == ev_index.end()) {
        ev_index[row.event_id] = static_cast<int>(data.events.size());
        EventInfo ev;
        ev.id = row.event_id;
        ev.xy = eq_xy;
        ev.mag = row.rec.mag;
        ev.region = region_from_label(classify_region(row.eq, polys));
        data.events.push_back(ev);
      }
      if (st_index.find(row.station_id) == st_index.end()) {
        st_index[row.station_id] = static_cast<int>(data.stations.size());
        data.stations.push_back(StationInfo{row.station_id, sta_xy});
      }
      row.rec.event = ev_index[row.event_id];
      row.rec.station = st_index[row.station_id];
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      if (!opt.skip_bad_rows) throw;
      ++rep.rejected;
      rep.reject_log.push_back(e.what());
    }
  }

  data.grid = opt.grid ? *opt.grid
              : rows.empty()
                  ? CellGrid{XY{0.0, 0.0}, opt.grid_dx, opt.grid_dy, 1, 1}
                  : CellGrid::cover(lo, hi, opt.grid_dx, opt.grid_dy);
  data.segments = SegmentMatrix(data.grid.ncells());
  data.residuals.resize(static_cast<int>(rows.size()), static_cast<int>(data.freqs.size()));

  int kept = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Row& row = rows[i];
    const Ray3 ray{row.rec.cls_xy, row.rec.cls_depth,
                   data.stations[row.rec.station].xy, 0.0};
    try {
      const auto segs = segment_ray(data.grid, ray);
      data.segments.add_row(segs);
    } catch (const std::exception& e) {
      if (!opt.skip_bad_rows)
        throw std::runtime_error("row " + std::to_string(row.rownum) + ": " + e.what());
      ++rep.rejected;
      rep.reject_log.push_back("row " + std::to_string(row.rownum) + ": " + e.what());
      continue;
    }
    data.records.push_back(row.rec);
    for (std::size_t k = 0; k < data.freqs.size(); ++k)
      data.residuals(kept, static_cast<int>(k)) =
          row.res[k] + data.c7[k] * row.rec.r_rup;
    ++kept;
  }
  data.residuals.conservativeResize(kept, Eigen::NoChange);

  rep.records = data.n_records();
  rep.events = data.n_events();
  rep.stations = data.n_stations();
  const auto cov = coverage_stats(data.segments);
  rep.cells_crossed =
      static_cast<int>(std::count_if(cov.path_count.begin(), cov.path_count.end(),
                                     [](int c) { return c > 0; }));
  return data;
}

void write_flatfile(const Dataset& data, const std::filesystem::path& csv,
                    const std::filesystem::path& c7_json, const UtmZone& zone) {
  const UtmProjector proj(zone);
  std::ofstream out(csv);
  if (!out) throw std::runtime_error("cannot write " + csv.string());
  out.precision(17);
  out << "event_id,station_id,mag,rrup_km,vs30,eq_lat,eq_lon,sta_lat,sta_lon,"
         "cls_lat,cls_lon,cls_depth_km";
  for (double f : data.freqs) {
    std::ostringstream tag;
    tag.precision(10);
    tag << f;
    out << ",res_f" << tag.str();
  }
  out << '\n';
  for (int r = 0; r < data.n_records(); ++r) {
    const Record& rec = data.records[r];
    const EventInfo& ev = data.events[rec.event];
    const StationInfo& st = data.stations[rec.station];
    const GeoPoint eq = proj.inverse(ev.xy);
    const GeoPoint sta = proj.inverse(st.xy);
    const GeoPoint cls = proj.inverse(rec.cls_xy);
    out << ev.id << ',' << st.id << ',' << rec.mag << ',' << rec.r_rup << ','
        << rec.vs30 << ',' << eq.lat << ',' << eq.lon << ',' << sta.lat << ','
        << sta.lon << ',' << cls.lat << ',' << cls.lon << ',' << rec.cls_depth;
    for (std::size_t k = 0; k < data.freqs.size(); ++k)
      out << ',' << data.residuals(r, static_cast<int>(k)) - data.c7[k] * rec.r_rup;
    out << '\n';
  }
  nlohmann::json j;
  j["freqs"] = data.freqs;
  j["c7"] = data.c7;
  std::ofstream cj(c7_json);
  if (!cj) throw std::runtime_error("cannot write " + c7_json.string());
  cj << j.dump(2) << '\n';
}

}  // namespace negmm
