#include "dpvis/layout.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "dpvis/error.hpp"

namespace dpvis {

std::vector<double> beeswarm(std::span<const SwarmPoint> points, double radius) {
    if (!(radius > 0.0)) throw Error(Errc::InvalidConfig, "beeswarm radius must be positive");
    const double diameter = 2.0 * radius;
    std::vector<double> y(points.size(), 0.0);

    std::map<int, std::vector<std::size_t>> lanes;
    for (std::size_t i = 0; i < points.size(); ++i) lanes[points[i].lane].push_back(i);

    for (auto& [lane, idx] : lanes) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return points[a].x < points[b].x; });
        std::size_t window = 0;  // first placed point that can still collide
        for (std::size_t n = 0; n < idx.size(); ++n) {
            const double x = points[idx[n]].x;
            while (window < n && x - points[idx[window]].x >= diameter) ++window;
            for (long rung = 0;; ++rung) {
                const long k = (rung + 1) / 2;
                const double cand = (rung % 2 == 1 ? 1.0 : -1.0) * static_cast<double>(k) * radius;
                bool clear = true;
                for (std::size_t m = window; m < n && clear; ++m) {
                    const std::size_t j = idx[m];
                    if (std::hypot(x - points[j].x, cand - y[j]) < diameter) clear = false;
                }
                if (clear) {
                    y[idx[n]] = cand;
                    break;
                }
            }
        }
    }
    return y;
}

namespace {

struct Vec {
    double x, y;
};

Vec sub(Vec a, Vec b) { return {a.x - b.x, a.y - b.y}; }
double dot(Vec a, Vec b) { return a.x * b.x + a.y * b.y; }
double norm(Vec a) { return std::hypot(a.x, a.y); }

double visibility(Vec p0, Vec p1, Vec q0, Vec q1) {
    const Vec p = sub(p1, p0);
    const double len2 = dot(p, p);
    auto project = [&](Vec q) {
        const double t = dot(sub(q, p0), p) / len2;
        return Vec{p0.x + t * p.x, p0.y + t * p.y};
    };
    const Vec i0 = project(q0), i1 = project(q1);
    const double span = norm(sub(i1, i0));
    if (span == 0.0) return 0.0;
    const Vec im{(i0.x + i1.x) / 2.0, (i0.y + i1.y) / 2.0};
    const Vec pm{(p0.x + p1.x) / 2.0, (p0.y + p1.y) / 2.0};
    return std::max(0.0, 1.0 - 2.0 * norm(sub(pm, im)) / span);
}

struct Edge {
    Vec a, b;  // normalized endpoints
    double length = 0.0;
    std::vector<std::pair<std::size_t, double>> partners;  // compatible edges and weights
    std::vector<double> ys;  // normalized y of subdivision points
};

double subdivision_x(const Edge& e, int i, int count) {
    const double t = static_cast<double>(i) / static_cast<double>(count + 1);
    return e.a.x + t * (e.b.x - e.a.x);
}

// y of the current polyline (endpoints + count subdivision points, evenly
// spaced in t) at parameter t.
double resample(const Edge& e, double t) {
    const auto count = static_cast<int>(e.ys.size());
    const double pos = t * (count + 1);
    const int seg = std::min(static_cast<int>(std::floor(pos)), count);
    const double frac = pos - seg;
    auto at = [&](int k) { return k == 0 ? e.a.y : k == count + 1 ? e.b.y : e.ys[static_cast<std::size_t>(k - 1)]; };
    return at(seg) + frac * (at(seg + 1) - at(seg));
}

}  // namespace

double compatibility(const Point& p0, const Point& p1, const Point& q0, const Point& q1) {
    const Vec a0{p0.x, p0.y}, a1{p1.x, p1.y}, b0{q0.x, q0.y}, b1{q1.x, q1.y};
    const Vec p = sub(a1, a0), q = sub(b1, b0);
    const double lp = norm(p), lq = norm(q);
    if (lp == 0.0 || lq == 0.0) return 0.0;
    const double angle = std::abs(dot(p, q)) / (lp * lq);
    const double avg = (lp + lq) / 2.0;
    const double scale = 2.0 / (avg / std::min(lp, lq) + std::max(lp, lq) / avg);
    const Vec mp{(a0.x + a1.x) / 2.0, (a0.y + a1.y) / 2.0}, mq{(b0.x + b1.x) / 2.0, (b0.y + b1.y) / 2.0};
    const double position = avg / (avg + norm(sub(mp, mq)));
    const double vis = std::min(visibility(a0, a1, b0, b1), visibility(b0, b1, a0, a1));
    return angle * scale * position * vis;
}

int final_subdivisions(const BundleParams& params) {
    return params.initial_subdivisions << std::max(0, params.cycles - 1);
}

std::vector<Polyline> bundle(std::span<const Polyline> polylines, const BundleParams& params) {
    if (params.cycles < 1 || params.initial_subdivisions < 1 || params.iterations < 0)
        throw Error(Errc::InvalidConfig, "bundling needs cycles >= 1 and subdivisions >= 1");

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
    for (const auto& pl : polylines)
        for (const auto& p : pl) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    const double sx = xmax > xmin ? xmax - xmin : 1.0;
    const double sy = ymax > ymin ? ymax - ymin : 1.0;
    auto normalize = [&](const Point& p) { return Vec{(p.x - xmin) / sx, (p.y - ymin) / sy}; };

    // edge_of[polyline][segment] -> index into edges, or npos when degenerate
    constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::vector<Edge> edges;
    std::vector<std::vector<std::size_t>> edge_of(polylines.size());
    for (std::size_t l = 0; l < polylines.size(); ++l) {
        const auto& pl = polylines[l];
        for (std::size_t i = 0; i + 1 < pl.size(); ++i) {
            if (pl[i] == pl[i + 1]) {
                edge_of[l].push_back(npos);
                continue;
            }
            Edge e;
            e.a = normalize(pl[i]);
            e.b = normalize(pl[i + 1]);
            e.length = norm(sub(e.b, e.a));
            if (e.length == 0.0) {
                edge_of[l].push_back(npos);
                continue;
            }
            edge_of[l].push_back(edges.size());
            edges.push_back(std::move(e));
        }
    }

    for (std::size_t i = 0; i < edges.size(); ++i) {
        for (std::size_t j = i + 1; j < edges.size(); ++j) {
            const double c = compatibility({edges[i].a.x, edges[i].a.y}, {edges[i].b.x, edges[i].b.y},
                                           {edges[j].a.x, edges[j].a.y}, {edges[j].b.x, edges[j].b.y});
            if (c >= params.compatibility_threshold) {
                edges[i].partners.emplace_back(j, c);
                edges[j].partners.emplace_back(i, c);
            }
        }
    }

    int count = params.initial_subdivisions;
    double step = params.step;
    for (auto& e : edges) {
        e.ys.resize(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) {
            const double t = static_cast<double>(i + 1) / static_cast<double>(count + 1);
            e.ys[static_cast<std::size_t>(i)] = e.a.y + t * (e.b.y - e.a.y);
        }
    }

    std::vector<std::vector<double>> next(edges.size());
    for (int cycle = 0; cycle < params.cycles; ++cycle) {
        if (cycle > 0) {
            const int finer = count * 2;
            for (auto& e : edges) {
                std::vector<double> ys(static_cast<std::size_t>(finer));
                for (int i = 0; i < finer; ++i)
                    ys[static_cast<std::size_t>(i)] =
                        resample(e, static_cast<double>(i + 1) / static_cast<double>(finer + 1));
                e.ys = std::move(ys);
            }
            count = finer;
            step /= 2.0;
        }
        for (int it = 0; it < params.iterations; ++it) {
            for (std::size_t k = 0; k < edges.size(); ++k) {
                const Edge& e = edges[k];
                const double kp = params.spring / (e.length * (count + 1));
                auto& out = next[k];
                out.resize(static_cast<std::size_t>(count));
                for (int i = 0; i < count; ++i) {
                    const auto ui = static_cast<std::size_t>(i);
                    const double y = e.ys[ui];
                    const double before = i == 0 ? e.a.y : e.ys[ui - 1];
                    const double after = i + 1 == count ? e.b.y : e.ys[ui + 1];
                    const double spring = kp * ((before - y) + (after - y));
                    const double x = subdivision_x(e, i + 1, count);
                    double pull = 0.0, weight = 0.0;
                    for (const auto& [j, c] : e.partners) {
                        const Edge& q = edges[j];
                        const double dx = subdivision_x(q, i + 1, count) - x;
                        const double dy = q.ys[ui] - y;
                        const double d = std::hypot(dx, dy);
                        if (d > 1e-12) pull += c * dy / d;
                        weight += c;
                    }
                    if (weight > 0.0) pull /= weight;
                    out[ui] = y + step * (spring + pull);
                }
            }
            for (std::size_t k = 0; k < edges.size(); ++k) edges[k].ys.swap(next[k]);
        }
    }

    std::vector<Polyline> out;
    out.reserve(polylines.size());
    for (std::size_t l = 0; l < polylines.size(); ++l) {
        const auto& pl = polylines[l];
        Polyline res;
        for (std::size_t i = 0; i < pl.size(); ++i) {
            res.push_back(pl[i]);
            if (i + 1 == pl.size()) break;
            const std::size_t k = edge_of[l][i];
            if (k == npos) continue;
            const Edge& e = edges[k];
            for (int s = 1; s <= count; ++s) {
                const double t = static_cast<double>(s) / static_cast<double>(count + 1);
                res.push_back(Point{pl[i].x + t * (pl[i + 1].x - pl[i].x), ymin + e.ys[static_cast<std::size_t>(s - 1)] * sy});
            }
        }
        out.push_back(std::move(res));
    }
    return out;
}

WaterfallLayout waterfall(std::span<const DecodedSubject> decoded, const Scope& scope, const WaterfallParams& params) {
    WaterfallLayout out;
    std::vector<SwarmPoint> pts;
    for (const auto& d : decoded) {
        if (scope && !scope->count(d.subject_id)) continue;
        for (std::size_t i = 0; i < d.visits.size(); ++i) {
            out.dots.push_back(WaterfallDot{d.subject_id, i, d.visits[i].age, 0.0, d.visits[i].state});
            pts.push_back(SwarmPoint{d.visits[i].age, d.visits[i].state});
        }
    }
    const auto offsets = beeswarm(pts, params.radius);
    for (std::size_t i = 0; i < out.dots.size(); ++i) out.dots[i].y = offsets[i];

    // Only transition segments are bundled; runs within a lane stay straight.
    std::vector<Polyline> segments;
    for (std::size_t i = 1; i < out.dots.size(); ++i) {
        const auto& a = out.dots[i - 1];
        const auto& b = out.dots[i];
        if (b.visit_index == 0 || a.lane == b.lane) continue;
        segments.push_back({{a.x, a.lane * params.lane_spacing + a.y}, {b.x, b.lane * params.lane_spacing + b.y}});
    }
    const auto bundled = bundle(segments, params.bundle);
    std::size_t next_segment = 0;
    for (std::size_t i = 0; i < out.dots.size(); ++i) {
        const auto& dot = out.dots[i];
        const Point center{dot.x, dot.lane * params.lane_spacing + dot.y};
        if (dot.visit_index == 0) {
            out.trajectories.push_back(WaterfallTrajectory{dot.subject_id, {center}});
            continue;
        }
        auto& pts = out.trajectories.back().points;
        if (out.dots[i - 1].lane != dot.lane) {
            const auto& seg = bundled[next_segment++];
            pts.insert(pts.end(), seg.begin() + 1, seg.end() - 1);
        }
        pts.push_back(center);
    }
    return out;
}

}  // namespace dpvis
