#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cobso/errors.hpp"
#include "cobso/tracking.hpp"

namespace cobso {

namespace csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double(const std::string& s, size_t line_no, const std::string& column) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ", column " + column +
                         ": cannot parse number from '" + s + "'");
    if (!std::isfinite(v))
        throw SchemaError("line " + std::to_string(line_no) + ", column " + column +
                          ": non-finite value '" + s + "'");
    return v;
}

inline long parse_long(const std::string& s, size_t line_no, const std::string& column) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ", column " + column +
                         ": cannot parse integer from '" + s + "'");
    return v;
}

/// Shortest decimal that round-trips the double.
inline std::string format_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace csv

inline constexpr const char* kTrackingHeader = "t,team,player_id,role,x,y";
inline constexpr const char* kEventHeader = "t,kind,team,player_id,ball_x,ball_y";

/// Read the documented long-format tracking CSV: one row per entity per
/// frame, ball rows tagged team=ball. Velocities are left zero; run
/// estimate_velocities afterwards.
inline Sequence ingest_tracking_csv(std::istream& in, const std::string& name = "tracking") {
    std::string line;
    size_t line_no = 0;
    if (!std::getline(in, line))
        throw ParseError(name + ": empty file");
    ++line_no;
    {
        auto header = csv::split_line(line);
        auto expected = csv::split_line(kTrackingHeader);
        if (header.size() != expected.size())
            throw SchemaError(name + ": header has " + std::to_string(header.size()) +
                              " columns, expected '" + kTrackingHeader + "'");
        for (size_t i = 0; i < expected.size(); ++i)
            if (header[i] != expected[i])
                throw SchemaError(name + ": missing or misplaced column '" + expected[i] +
                                  "' in header (got '" + header[i] + "')");
    }

    Sequence seq;
    Frame frame;
    bool frame_open = false;
    bool ball_seen = false;

    auto close_frame = [&]() {
        if (!frame_open) return;
        if (!ball_seen)
            throw SchemaError(name + ": frame t=" + std::to_string(frame.t) + " has no ball row");
        seq.frames.push_back(frame);
        frame = Frame{};
        ball_seen = false;
        frame_open = false;
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv::split_line(line);
        if (fields.size() != 6)
            throw ParseError("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                             std::to_string(fields.size()));
        double t = csv::parse_double(fields[0], line_no, "t");
        if (frame_open && t != frame.t) close_frame();
        if (!frame_open) {
            if (!seq.frames.empty() && t <= seq.frames.back().t)
                throw SchemaError("line " + std::to_string(line_no) +
                                  ": timestamps not strictly increasing");
            frame.t = t;
            frame_open = true;
        }
        double x = csv::parse_double(fields[4], line_no, "x");
        double y = csv::parse_double(fields[5], line_no, "y");
        if (fields[1] == "ball") {
            if (ball_seen)
                throw SchemaError("line " + std::to_string(line_no) + ": duplicate ball row");
            frame.ball.pos = {x, y};
            ball_seen = true;
        } else {
            PlayerState p;
            if (fields[1] == "home")
                p.team = Team::Home;
            else if (fields[1] == "away")
                p.team = Team::Away;
            else
                throw SchemaError("line " + std::to_string(line_no) +
                                  ", column team: unknown value '" + fields[1] + "'");
            p.id = int(csv::parse_long(fields[2], line_no, "player_id"));
            if (fields[3] == "goalkeeper")
                p.role = Role::Goalkeeper;
            else if (fields[3] == "outfield")
                p.role = Role::Outfield;
            else
                throw SchemaError("line " + std::to_string(line_no) +
                                  ", column role: unknown value '" + fields[3] + "'");
            p.pos = {x, y};
            frame.players.push_back(p);
        }
    }
    close_frame();
    if (seq.frames.empty())
        throw SchemaError(name + ": no frames");
    if (seq.frames.size() >= 2)
        seq.rate_hz = 1.0 / (seq.frames[1].t - seq.frames[0].t);
    seq.validate_timing();
    return seq;
}

inline Sequence ingest_tracking_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open tracking file: " + path);
    return ingest_tracking_csv(in, path);
}

inline std::vector<Event> ingest_events_csv(std::istream& in, const std::string& name = "events") {
    std::string line;
    size_t line_no = 0;
    if (!std::getline(in, line))
        throw ParseError(name + ": empty file");
    ++line_no;
    if (csv::split_line(line) != csv::split_line(kEventHeader))
        throw SchemaError(name + ": header must be '" + std::string(kEventHeader) + "'");

    std::vector<Event> events;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = csv::split_line(line);
        if (fields.size() != 6)
            throw ParseError("line " + std::to_string(line_no) + ": expected 6 fields, got " +
                             std::to_string(fields.size()));
        Event e;
        e.t = csv::parse_double(fields[0], line_no, "t");
        auto kind = event_kind_from(fields[1]);
        if (!kind)
            throw SchemaError("line " + std::to_string(line_no) + ", column kind: unknown value '" +
                              fields[1] + "'");
        e.kind = *kind;
        if (fields[2] == "home")
            e.team = Team::Home;
        else if (fields[2] == "away")
            e.team = Team::Away;
        else
            throw SchemaError("line " + std::to_string(line_no) + ", column team: unknown value '" +
                              fields[2] + "'");
        e.player_id = int(csv::parse_long(fields[3], line_no, "player_id"));
        e.ball_pos = {csv::parse_double(fields[4], line_no, "ball_x"),
                      csv::parse_double(fields[5], line_no, "ball_y")};
        events.push_back(e);
    }
    return events;
}

inline std::vector<Event> ingest_events_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open events file: " + path);
    return ingest_events_csv(in, path);
}

inline void write_tracking_csv(const Sequence& seq, std::ostream& out) {
    out << kTrackingHeader << "\n";
    for (const auto& f : seq.frames) {
        const std::string ts = csv::format_double(f.t);
        for (const auto& p : f.players)
            out << ts << ',' << to_string(p.team) << ',' << p.id << ',' << to_string(p.role) << ','
                << csv::format_double(p.pos.x) << ',' << csv::format_double(p.pos.y) << "\n";
        out << ts << ",ball,0,ball," << csv::format_double(f.ball.pos.x) << ','
            << csv::format_double(f.ball.pos.y) << "\n";
    }
}

inline void write_events_csv(const std::vector<Event>& events, std::ostream& out) {
    out << kEventHeader << "\n";
    for (const auto& e : events)
        out << csv::format_double(e.t) << ',' << to_string(e.kind) << ',' << to_string(e.team) << ','
            << e.player_id << ',' << csv::format_double(e.ball_pos.x) << ','
            << csv::format_double(e.ball_pos.y) << "\n";
}

inline void write_tracking_csv_file(const Sequence& seq, const std::string& path) {
    std::ofstream out(path, std::ios::binary); // binary keeps LF endings everywhere
    if (!out) throw ParseError("cannot write tracking file: " + path);
    write_tracking_csv(seq, out);
}

inline void write_events_csv_file(const std::vector<Event>& events, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write events file: " + path);
    write_events_csv(events, out);
}

/// JSON alternative to the CSV schema: {"rate_hz":..,"attacking":"home",
/// "frames":[{"t":..,"players":[{"team","id","role","x","y","vx","vy"}...],
/// "ball":{...}}], "events":[...]}. JSON carries velocities explicitly.
inline Sequence ingest_tracking_json(const nlohmann::json& j) {
    Sequence seq;
    seq.rate_hz = j.value("rate_hz", 25.0);
    if (j.contains("attacking")) seq.attacking = j.at("attacking") == "away" ? Team::Away : Team::Home;
    for (const auto& jf : j.at("frames")) {
        Frame f;
        f.t = jf.at("t").get<double>();
        for (const auto& jp : jf.at("players")) {
            PlayerState p;
            p.team = jp.at("team") == "away" ? Team::Away : Team::Home;
            p.id = jp.at("id").get<int>();
            p.role = jp.value("role", "outfield") == std::string("goalkeeper") ? Role::Goalkeeper
                                                                               : Role::Outfield;
            p.pos = {jp.at("x").get<double>(), jp.at("y").get<double>()};
            p.vel = {jp.value("vx", 0.0), jp.value("vy", 0.0)};
            if (!p.pos.finite() || !p.vel.finite())
                throw SchemaError("json frame t=" + std::to_string(f.t) +
                                  ": non-finite value for player " + std::to_string(p.id));
            f.players.push_back(p);
        }
        const auto& jb = jf.at("ball");
        f.ball.pos = {jb.at("x").get<double>(), jb.at("y").get<double>()};
        f.ball.vel = {jb.value("vx", 0.0), jb.value("vy", 0.0)};
        seq.frames.push_back(std::move(f));
    }
    if (j.contains("events")) {
        for (const auto& je : j.at("events")) {
            Event e;
            e.t = je.at("t").get<double>();
            e.kind = event_kind_from(je.at("kind").get<std::string>()).value_or(EventKind::Other);
            e.team = je.at("team") == "away" ? Team::Away : Team::Home;
            e.player_id = je.value("player_id", 0);
            e.ball_pos = {je.value("ball_x", 0.0), je.value("ball_y", 0.0)};
            seq.events.push_back(e);
        }
    }
    if (seq.frames.empty()) throw SchemaError("json tracking: no frames");
    seq.validate_timing();
    return seq;
}

inline Sequence ingest_tracking_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open tracking file: " + path);
    nlohmann::json j;
    in >> j;
    return ingest_tracking_json(j);
}

} // namespace cobso
