#pragma once

#include <span>
#include <string>
#include <vector>

#include "dpvis/analytics.hpp"
#include "dpvis/hmm.hpp"

namespace dpvis {

struct SwarmPoint {
    double x = 0.0;
    int lane = 0;
};

// Lane-relative y offsets. Within a lane, points are placed in ascending x
// (stable on ties); each takes the first rung of 0, +r, -r, +2r, -2r, ...
// whose center is at least 2r from every point already placed in the lane.
std::vector<double> beeswarm(std::span<const SwarmPoint> points, double radius);

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

using Polyline = std::vector<Point>;

struct BundleParams {
    int cycles = 6;
    int initial_subdivisions = 1;  // doubles every cycle
    int iterations = 50;           // per cycle
    double step = 0.04;            // halves every cycle
    double compatibility_threshold = 0.6;
    double spring = 0.1;
};

// Force-directed edge bundling acting on y only. Every segment between two
// consecutive input vertices is subdivided; subdivision points are pulled
// toward the matching points of compatible segments. Input vertices are
// kept bitwise, and every subdivision point's x is the linear interpolation
// of its segment's endpoints. Zero-length segments are passed through.
// Forces are computed in a frame normalized to the unit box.
std::vector<Polyline> bundle(std::span<const Polyline> polylines, const BundleParams& params = {});

// Number of points each input segment contributes between its endpoints in
// the output of bundle().
int final_subdivisions(const BundleParams& params);

// Segment compatibility: angle x scale x position x visibility.
double compatibility(const Point& p0, const Point& p1, const Point& q0, const Point& q1);

struct WaterfallDot {
    std::string subject_id;
    std::size_t visit_index = 0;
    double x = 0.0;  // age in months
    double y = 0.0;  // offset within the lane
    int lane = 0;    // state
};

struct WaterfallParams {
    double radius = 1.0;         // dot radius in months
    double lane_spacing = 20.0;  // distance between lane centers for trajectories
    BundleParams bundle;
};

struct WaterfallTrajectory {
    std::string subject_id;
    Polyline points;  // in (months, lane * lane_spacing + offset)
};

struct WaterfallLayout {
    std::vector<WaterfallDot> dots;
    std::vector<WaterfallTrajectory> trajectories;
};

// Dots placed by beeswarm per state lane. Trajectories run through dot
// centers; only segments that change state are bundled.
WaterfallLayout waterfall(std::span<const DecodedSubject> decoded, const Scope& scope,
                          const WaterfallParams& params = {});

}  // namespace dpvis
