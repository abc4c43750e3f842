#pragma once

#include <vector>

#include "cobso/errors.hpp"
#include "cobso/geometry.hpp"

namespace cobso {

/// Pitch geometry and its grid discretization. Coordinates are meters with
/// the pitch center at the origin; the canonical attack direction is +x.
/// Cell centers tile the playing surface exactly: cell (ix, iy) is centered
/// at (-length/2 + (ix+0.5)*dx, -width/2 + (iy+0.5)*dy).
struct PitchSpec {
    double length = 105.0;
    double width = 68.0;
    int nx = 50;
    int ny = 32;
    double goal_width = 7.32;

    bool operator==(const PitchSpec&) const = default;

    double dx() const { return length / nx; }
    double dy() const { return width / ny; }
    double cell_area() const { return dx() * dy(); }
    int cell_count() const { return nx * ny; }

    Vec2 cell_center(int ix, int iy) const {
        return {-0.5 * length + (ix + 0.5) * dx(), -0.5 * width + (iy + 0.5) * dy()};
    }

    /// Cell containing point p, clamped to the grid.
    void cell_of(Vec2 p, int& ix, int& iy) const {
        ix = int((p.x + 0.5 * length) / dx());
        iy = int((p.y + 0.5 * width) / dy());
        ix = ix < 0 ? 0 : (ix >= nx ? nx - 1 : ix);
        iy = iy < 0 ? 0 : (iy >= ny ? ny - 1 : iy);
    }

    bool contains(Vec2 p, double margin = 0.0) const {
        return p.x >= -0.5 * length - margin && p.x <= 0.5 * length + margin &&
               p.y >= -0.5 * width - margin && p.y <= 0.5 * width + margin;
    }

    /// Goal attacked in canonical (+x) direction.
    Vec2 goal_center() const { return {0.5 * length, 0.0}; }
    Vec2 goal_post_left() const { return {0.5 * length, 0.5 * goal_width}; }
    Vec2 goal_post_right() const { return {0.5 * length, -0.5 * goal_width}; }

    void validate() const {
        if (length <= 0.0 || width <= 0.0 || nx <= 0 || ny <= 0 || goal_width <= 0.0)
            throw ContractError("PitchSpec: dimensions and grid counts must be positive");
        if (goal_width >= width)
            throw ContractError("PitchSpec: goal wider than pitch");
    }
};

/// Scalar field sampled at the cell centers of a PitchSpec grid.
/// Row-major storage: index = iy * nx + ix.
struct Surface {
    PitchSpec pitch;
    std::vector<double> values;

    Surface() = default;
    explicit Surface(const PitchSpec& spec, double fill = 0.0)
        : pitch(spec), values(static_cast<size_t>(spec.cell_count()), fill) {}

    double& at(int ix, int iy) { return values[size_t(iy) * pitch.nx + ix]; }
    double at(int ix, int iy) const { return values[size_t(iy) * pitch.nx + ix]; }

    double sum() const {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }

    double max_value() const {
        double m = values.empty() ? 0.0 : values[0];
        for (double v : values) m = v > m ? v : m;
        return m;
    }

    /// Field reflected about the pitch midline y = 0 (iy -> ny-1-iy).
    Surface mirrored_y() const {
        Surface out(pitch);
        for (int iy = 0; iy < pitch.ny; ++iy)
            for (int ix = 0; ix < pitch.nx; ++ix)
                out.at(ix, iy) = at(ix, pitch.ny - 1 - iy);
        return out;
    }
};

inline void require_same_grid(const PitchSpec& a, const PitchSpec& b, const char* what) {
    if (!(a == b))
        throw ContractError(std::string(what) + ": grid mismatch between inputs");
}

} // namespace cobso
