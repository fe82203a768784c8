#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"

namespace agentsynth {

// ---------------------------------------------------------------- problems

struct TripWindow {
    std::string city;
    int lo = 1;
    int hi = 1;
    friend bool operator==(const TripWindow&, const TripWindow&) = default;
};

/// Days are 1-based and inclusive. A flight day counts toward both the city
/// left and the city reached, so durations sum to total_days + cities - 1.
/// `stays` keeps the order the constraints are stated in; `flights` is an
/// undirected list kept in presentation order.
struct TripProblem {
    int total_days = 0;
    std::vector<std::pair<std::string, int>> stays;
    std::vector<std::pair<std::string, std::string>> flights;
    std::vector<TripWindow> windows;
    std::string region = "global";

    std::vector<std::string> cities() const {
        std::vector<std::string> out;
        for (const auto& s : stays) out.push_back(s.first);
        return out;
    }

    int duration(const std::string& city) const {
        for (const auto& [c, d] : stays)
            if (c == city) return d;
        return -1;
    }

    bool has_flight(const std::string& a, const std::string& b) const {
        for (const auto& [x, y] : flights)
            if ((x == a && y == b) || (x == b && y == a)) return true;
        return false;
    }

    friend bool operator==(const TripProblem&, const TripProblem&) = default;
};

struct Friend {
    std::string name;
    std::string location;
    int lo = 0;  // minutes of day
    int hi = 0;
    int min_meet = 0;
    friend bool operator==(const Friend&, const Friend&) = default;
};

struct MeetingProblem {
    std::string city = "San Francisco";
    std::string base;
    int day_start = 9 * 60;
    int day_end = 22 * 60;
    std::vector<Friend> friends;
    std::vector<std::string> locations;
    std::vector<std::vector<int>> travel;  // travel[i][j] minutes, indices into locations

    int location_index(const std::string& loc) const {
        for (std::size_t i = 0; i < locations.size(); ++i)
            if (locations[i] == loc) return static_cast<int>(i);
        return -1;
    }

    int travel_time(const std::string& from, const std::string& to) const {
        const int a = location_index(from), b = location_index(to);
        require(a >= 0 && b >= 0, ErrorKind::InvalidArgument, "unknown location " + (a < 0 ? from : to));
        return travel[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }

    const Friend* find(const std::string& name) const {
        for (const auto& f : friends)
            if (f.name == name) return &f;
        return nullptr;
    }

    friend bool operator==(const MeetingProblem&, const MeetingProblem&) = default;
};

struct BusyBlock {
    std::string participant;
    int day = 0;  // index into candidate_days
    int lo = 0;
    int hi = 0;
    friend bool operator==(const BusyBlock&, const BusyBlock&) = default;
};

/// Slots start on a 30-minute grid. With `earliest_preference` the earliest
/// feasible slot is the answer; otherwise the instance must have exactly one.
struct CalendarProblem {
    std::vector<std::string> participants;
    std::vector<BusyBlock> busy;
    int meeting_len = 30;
    int work_lo = 9 * 60;
    int work_hi = 17 * 60;
    std::vector<std::string> candidate_days;
    bool earliest_preference = false;

    friend bool operator==(const CalendarProblem&, const CalendarProblem&) = default;
};

using ScheduleProblem = std::variant<TripProblem, MeetingProblem, CalendarProblem>;

inline std::string domain_name(const ScheduleProblem& p) {
    switch (p.index()) {
        case 0: return "trip";
        case 1: return "meeting";
        default: return "calendar";
    }
}

// --------------------------------------------------------------- solutions

struct TripSegment {
    std::string city;
    int lo = 0;
    int hi = 0;
    friend bool operator==(const TripSegment&, const TripSegment&) = default;
};

struct MeetingVisit {
    std::string friend_name;
    int start = 0;
    int end = 0;
    friend bool operator==(const MeetingVisit&, const MeetingVisit&) = default;
};

struct CalendarSlot {
    int day = 0;
    int start = 0;
    friend bool operator==(const CalendarSlot&, const CalendarSlot&) = default;
};

/// One candidate solution; only the member matching the problem's domain is
/// meaningful.
struct Itinerary {
    std::vector<TripSegment> segments;
    std::vector<MeetingVisit> visits;
    std::optional<CalendarSlot> slot;
    bool earliest = false;

    friend bool operator==(const Itinerary& a, const Itinerary& b) {
        return a.segments == b.segments && a.visits == b.visits && a.slot == b.slot;
    }
};

// ------------------------------------------------------------------- times

inline std::string clock24(int minutes) {
    const int h = minutes / 60, m = minutes % 60;
    return std::to_string(h) + ":" + (m < 10 ? "0" : "") + std::to_string(m);
}

inline std::string clock12(int minutes) {
    int h = minutes / 60;
    const int m = minutes % 60;
    const char* suffix = h >= 12 ? "PM" : "AM";
    h %= 12;
    if (h == 0) h = 12;
    return std::to_string(h) + ":" + (m < 10 ? "0" : "") + std::to_string(m) + suffix;
}

/// Parses "9:05", "14:30", "9:05AM" or "2:15 pm" into minutes of day.
inline std::optional<int> parse_clock(std::string_view s) {
    static const std::regex re(R"(^\s*(\d{1,2}):(\d{2})\s*([AaPp][Mm])?\s*$)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_match(s.begin(), s.end(), m, re)) return std::nullopt;
    int h = std::stoi(m[1].str());
    const int mm = std::stoi(m[2].str());
    if (mm > 59) return std::nullopt;
    if (m[3].matched) {
        if (h < 1 || h > 12) return std::nullopt;
        const bool pm = m[3].str()[0] == 'P' || m[3].str()[0] == 'p';
        h %= 12;
        if (pm) h += 12;
    } else if (h > 24) {
        return std::nullopt;
    }
    return h * 60 + mm;
}

// ------------------------------------------------------------------ solve

inline constexpr std::size_t kMaxExhaustive = 8;
inline constexpr std::size_t kMaxCalendarDays = 7;

inline std::vector<TripSegment> trip_segments(const TripProblem& p, const std::vector<std::string>& order) {
    std::vector<TripSegment> segs;
    int day = 1;
    for (const auto& c : order) {
        const int d = p.duration(c);
        segs.push_back({c, day, day + d - 1});
        day += d - 1;
    }
    return segs;
}

inline bool window_satisfied(const TripWindow& w, const std::vector<TripSegment>& segs) {
    for (const auto& s : segs)
        if (s.city == w.city && s.lo <= w.lo && s.hi >= w.hi) return true;
    return false;
}

inline std::vector<Itinerary> solve(const TripProblem& p) {
    const auto cities = p.cities();
    if (cities.size() > kMaxExhaustive) {
        fail(ErrorKind::TooLargeForExhaustive, std::to_string(cities.size()) + " cities (max 8)");
    }
    std::vector<std::string> order = cities;
    std::sort(order.begin(), order.end());
    std::vector<Itinerary> out;
    if (order.empty()) return out;
    do {
        bool ok = true;
        for (std::size_t i = 0; i + 1 < order.size() && ok; ++i) ok = p.has_flight(order[i], order[i + 1]);
        if (!ok) continue;
        auto segs = trip_segments(p, order);
        if (segs.back().hi != p.total_days) continue;
        for (const auto& w : p.windows) ok = ok && window_satisfied(w, segs);
        if (ok) out.push_back({std::move(segs), {}, std::nullopt, false});
    } while (std::next_permutation(order.begin(), order.end()));
    return out;
}

namespace detail {

inline void meeting_search(const MeetingProblem& p, std::vector<bool>& used, std::vector<MeetingVisit>& path,
                           const std::string& loc, int now, std::size_t& best, std::vector<Itinerary>& out) {
    if (path.size() > best) {
        best = path.size();
        out.clear();
    }
    if (path.size() == best && !path.empty()) out.push_back({{}, path, std::nullopt, false});
    for (std::size_t i = 0; i < p.friends.size(); ++i) {
        if (used[i]) continue;
        const Friend& f = p.friends[i];
        const int arrive = now + p.travel_time(loc, f.location);
        const int start = std::max(arrive, f.lo);
        const int end = start + f.min_meet;
        if (end > f.hi || end > p.day_end) continue;
        used[i] = true;
        path.push_back({f.name, start, end});
        meeting_search(p, used, path, f.location, end, best, out);
        path.pop_back();
        used[i] = false;
    }
}

}  // namespace detail

/// All visit orders meeting the maximal number of friends, each scheduled
/// greedily at the earliest feasible time.
inline std::vector<Itinerary> solve(const MeetingProblem& p) {
    if (p.friends.size() > kMaxExhaustive) {
        fail(ErrorKind::TooLargeForExhaustive, std::to_string(p.friends.size()) + " friends (max 8)");
    }
    std::vector<bool> used(p.friends.size(), false);
    std::vector<MeetingVisit> path;
    std::size_t best = 0;
    std::vector<Itinerary> out;
    detail::meeting_search(p, used, path, p.base, p.day_start, best, out);
    return out;
}

inline bool slot_free(const CalendarProblem& p, int day, int start) {
    const int end = start + p.meeting_len;
    if (start < p.work_lo || end > p.work_hi) return false;
    for (const auto& b : p.busy)
        if (b.day == day && b.lo < end && start < b.hi) return false;
    return true;
}

inline std::vector<Itinerary> solve(const CalendarProblem& p) {
    if (p.candidate_days.size() > kMaxCalendarDays) {
        fail(ErrorKind::TooLargeForExhaustive, std::to_string(p.candidate_days.size()) + " candidate days (max 7)");
    }
    std::vector<Itinerary> out;
    for (int d = 0; d < static_cast<int>(p.candidate_days.size()); ++d) {
        for (int t = p.work_lo; t + p.meeting_len <= p.work_hi; t += 30) {
            if (slot_free(p, d, t)) out.push_back({{}, {}, CalendarSlot{d, t}, out.empty()});
        }
    }
    return out;
}

inline std::vector<Itinerary> solve(const ScheduleProblem& p) {
    return std::visit([](const auto& x) { return solve(x); }, p);
}

/// Unique solution (meetings: unique maximizing order; calendar in
/// earliest-preference mode: any feasible slot, the earliest being unique).
inline bool accept(const ScheduleProblem& p) {
    const auto sols = solve(p);
    if (const auto* cal = std::get_if<CalendarProblem>(&p); cal && cal->earliest_preference) return !sols.empty();
    return sols.size() == 1;
}

// ----------------------------------------------------------------- verify

inline std::vector<std::string> verify(const TripProblem& p, const Itinerary& cand) {
    std::vector<std::string> v;
    const auto& segs = cand.segments;
    if (segs.empty()) return {"coverage(1," + std::to_string(p.total_days) + ")"};
    std::map<std::string, int> visits;
    for (const auto& s : segs) {
        if (p.duration(s.city) < 0) v.push_back("unknown city(" + s.city + ")");
        if (++visits[s.city] == 2) v.push_back("repeat visit(" + s.city + ")");
        if (s.hi < s.lo) v.push_back("empty segment(" + s.city + ")");
    }
    for (const auto& [city, d] : p.stays) {
        if (!visits.count(city)) v.push_back("missing city(" + city + ")");
    }
    if (segs.front().lo != 1 || segs.back().hi != p.total_days) {
        v.push_back("coverage(1," + std::to_string(p.total_days) + ")");
    }
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
        if (segs[i + 1].lo != segs[i].hi) v.push_back("contiguity(" + segs[i].city + "," + segs[i + 1].city + ")");
        if (!p.has_flight(segs[i].city, segs[i + 1].city)) {
            v.push_back("no direct flight(" + segs[i].city + "," + segs[i + 1].city + ")");
        }
    }
    for (const auto& s : segs) {
        const int d = p.duration(s.city);
        if (d >= 0 && s.hi - s.lo + 1 != d) v.push_back("duration(" + s.city + "," + std::to_string(d) + ")");
    }
    for (const auto& w : p.windows) {
        if (!window_satisfied(w, segs)) {
            v.push_back("window(" + w.city + "," + std::to_string(w.lo) + "," + std::to_string(w.hi) + ")");
        }
    }
    return v;
}

inline std::vector<std::string> verify(const MeetingProblem& p, const Itinerary& cand) {
    std::vector<std::string> v;
    std::string loc = p.base;
    int now = p.day_start;
    std::set<std::string> met;
    for (const auto& visit : cand.visits) {
        const Friend* f = p.find(visit.friend_name);
        if (!f) {
            v.push_back("unknown friend(" + visit.friend_name + ")");
            continue;
        }
        if (!met.insert(f->name).second) v.push_back("repeat meeting(" + f->name + ")");
        const int arrive = now + p.travel_time(loc, f->location);
        if (visit.start < arrive) v.push_back("travel(" + loc + "," + f->location + ")");
        if (visit.start < f->lo || visit.end > f->hi) {
            v.push_back("availability(" + f->name + "," + clock12(f->lo) + "," + clock12(f->hi) + ")");
        }
        if (visit.end - visit.start < f->min_meet) {
            v.push_back("min meeting(" + f->name + "," + std::to_string(f->min_meet) + ")");
        }
        if (visit.end > p.day_end) v.push_back("day end(" + clock12(p.day_end) + ")");
        loc = f->location;
        now = std::max(now, visit.end);
    }
    if (v.empty()) {
        const auto sols = solve(p);
        const std::size_t best = sols.empty() ? 0 : sols.front().visits.size();
        if (cand.visits.size() < best) v.push_back("suboptimal(" + std::to_string(best) + " friends possible)");
    }
    return v;
}

inline std::vector<std::string> verify(const CalendarProblem& p, const Itinerary& cand) {
    if (!cand.slot) return {"missing slot"};
    const auto& s = *cand.slot;
    std::vector<std::string> v;
    if (s.day < 0 || s.day >= static_cast<int>(p.candidate_days.size())) return {"unknown day"};
    const std::string& day = p.candidate_days[static_cast<std::size_t>(s.day)];
    const int end = s.start + p.meeting_len;
    if (s.start < p.work_lo || end > p.work_hi) v.push_back("workday(" + clock24(p.work_lo) + "," + clock24(p.work_hi) + ")");
    for (const auto& b : p.busy) {
        if (b.day == s.day && b.lo < end && s.start < b.hi) {
            v.push_back("busy(" + b.participant + "," + day + "," + clock24(b.lo) + "," + clock24(b.hi) + ")");
        }
    }
    if (v.empty() && p.earliest_preference) {
        const auto sols = solve(p);
        if (!sols.empty() && !(sols.front().slot == cand.slot)) v.push_back("not earliest");
    }
    return v;
}

inline std::vector<std::string> verify(const ScheduleProblem& p, const Itinerary& cand) {
    return std::visit([&](const auto& x) { return verify(x, cand); }, p);
}

// ------------------------------------------------------------- generation

struct TripParams {
    int min_cities = 3;
    int max_cities = 6;
    int cities = 0;      // fixed count when > 0
    int total_days = 0;  // fixed total when > 0
    int min_stay = 2;
    int max_stay = 7;
    double extra_flight_prob = 0.25;
    double initial_window_prob = 0.3;
    bool require_unique = true;
    int max_attempts = 200;
    std::vector<std::string> city_pool;
};

struct MeetingParams {
    int min_friends = 3;
    int max_friends = 6;
    bool require_unique = true;
    int max_attempts = 400;
    std::vector<std::string> name_pool;
    std::vector<std::string> location_pool;
};

struct CalendarParams {
    int min_participants = 2;
    int max_participants = 4;
    int min_days = 1;
    int max_days = 3;
    std::vector<int> meeting_lengths{30, 60};
    double gap_prob = 0.1;
    bool earliest_preference = false;
    bool require_unique = true;
    int max_attempts = 200;
    std::vector<std::string> name_pool;
    std::optional<CalendarSlot> gold;  // fixed target slot (day index, start)
};

struct ScheduleInstance {
    ScheduleProblem problem;
    Itinerary solution;
    std::uint64_t seed = 0;
    int attempts = 0;
};

inline const std::vector<std::string>& default_city_pool() {
    static const std::vector<std::string> pool{
        "Amsterdam", "Athens",   "Barcelona", "Berlin",    "Brussels", "Budapest",  "Copenhagen", "Dubrovnik",
        "Dublin",    "Edinburgh", "Florence", "Hamburg",   "Helsinki", "Istanbul",  "Krakow",     "Lisbon",
        "London",    "Lyon",     "Madrid",    "Miami",     "Milan",    "Munich",    "Nairobi",    "Oslo",
        "Paris",     "Prague",   "Reykjavik", "Riga",      "Rome",     "Seville",   "Stockholm",  "Tallinn",
        "Valencia",  "Venice",   "Vienna",    "Vilnius",   "Warsaw",   "Zurich"};
    return pool;
}

inline const std::vector<std::string>& default_name_pool() {
    static const std::vector<std::string> pool{
        "Alice", "Betty", "Carol",  "Daniel", "Emily", "Frank", "George", "Helen",  "Irene",  "James",
        "Karen", "Laura", "Mark",   "Nancy",  "Oscar", "Paul",  "Rachel", "Steven", "Thomas", "Ursula",
        "Victor", "Wendy", "Xavier", "Yvonne", "Zachary"};
    return pool;
}

inline const std::vector<std::string>& default_location_pool() {
    static const std::vector<std::string> pool{
        "Nob Hill",       "Marina District", "The Castro",       "Mission District", "Haight-Ashbury",
        "Union Square",   "Chinatown",       "North Beach",      "Fisherman's Wharf", "Presidio",
        "Golden Gate Park", "Russian Hill",  "Pacific Heights",  "Embarcadero",      "Sunset District"};
    return pool;
}

namespace detail {

inline std::vector<std::string> draw_distinct(Rng& rng, const std::vector<std::string>& pool, std::size_t k) {
    require(pool.size() >= k, ErrorKind::InvalidArgument, "entity pool too small");
    std::vector<std::string> out;
    for (std::size_t i : rng.sample_indices(pool.size(), k)) out.push_back(pool[i]);
    return out;
}

inline std::optional<ScheduleInstance> trip_attempt(const TripParams& prm, Rng& rng) {
    const auto& pool = prm.city_pool.empty() ? default_city_pool() : prm.city_pool;
    const int n = prm.cities > 0 ? prm.cities : static_cast<int>(rng.between(prm.min_cities, prm.max_cities));
    require(n >= 1, ErrorKind::InvalidArgument, "trip needs at least one city");
    std::vector<int> durations(static_cast<std::size_t>(n), prm.min_stay);
    if (prm.total_days > 0) {
        int remaining = prm.total_days + n - 1 - n * prm.min_stay;
        require(remaining >= 0 && remaining <= n * (prm.max_stay - prm.min_stay), ErrorKind::InvalidArgument,
                "total_days incompatible with stay bounds");
        while (remaining > 0) {
            const std::size_t i = rng.index(durations.size());
            if (durations[i] < prm.max_stay) {
                ++durations[i];
                --remaining;
            }
        }
    } else {
        for (auto& d : durations) d = static_cast<int>(rng.between(prm.min_stay, prm.max_stay));
    }
    const auto gold_order = draw_distinct(rng, pool, static_cast<std::size_t>(n));
    TripProblem p;
    for (std::size_t i = 0; i < gold_order.size(); ++i) p.stays.emplace_back(gold_order[i], durations[i]);
    p.total_days = std::accumulate(durations.begin(), durations.end(), 0) - (n - 1);

    std::set<std::pair<std::string, std::string>> flight_set;
    auto key = [](const std::string& a, const std::string& b) { return a < b ? std::pair(a, b) : std::pair(b, a); };
    for (std::size_t i = 0; i + 1 < gold_order.size(); ++i) flight_set.insert(key(gold_order[i], gold_order[i + 1]));
    for (std::size_t i = 0; i < gold_order.size(); ++i)
        for (std::size_t j = i + 1; j < gold_order.size(); ++j)
            if (rng.chance(prm.extra_flight_prob)) flight_set.insert(key(gold_order[i], gold_order[j]));
    p.flights.assign(flight_set.begin(), flight_set.end());
    rng.shuffle(p.stays);

    const auto gold = trip_segments(p, gold_order);
    std::vector<bool> pinned(gold.size(), false);
    auto pin = [&](std::size_t i) {
        const auto& s = gold[i];
        int lo = s.lo, hi = s.hi;
        if (hi > lo && rng.chance(0.5)) {
            lo = static_cast<int>(rng.between(s.lo, s.hi));
            hi = static_cast<int>(rng.between(lo, s.hi));
        }
        p.windows.push_back({s.city, lo, hi});
        pinned[i] = true;
    };
    if (rng.chance(prm.initial_window_prob)) pin(rng.index(gold.size()));
    for (std::size_t round = 0; round <= gold.size(); ++round) {
        auto sols = solve(p);
        if (sols.size() == 1 || (!prm.require_unique && !sols.empty())) {
            std::sort(p.windows.begin(), p.windows.end(), [](const auto& a, const auto& b) { return a.lo < b.lo; });
            Itinerary gold_it{gold, {}, std::nullopt, false};
            return ScheduleInstance{p, sols.size() == 1 ? sols.front() : gold_it, 0, 0};
        }
        const Itinerary* rival = nullptr;
        for (const auto& s : sols)
            if (s.segments != gold) rival = &s;
        if (!rival) return std::nullopt;
        std::size_t at = 0;
        while (at < gold.size() && rival->segments[at] == gold[at]) ++at;
        if (at >= gold.size() || pinned[at]) {
            std::vector<std::size_t> open;
            for (std::size_t i = 0; i < gold.size(); ++i)
                if (!pinned[i]) open.push_back(i);
            if (open.empty()) return std::nullopt;
            at = rng.pick(open);
        }
        pin(at);
    }
    return std::nullopt;
}

inline int round_up(int t, int step) { return (t + step - 1) / step * step; }

inline std::optional<ScheduleInstance> meeting_attempt(const MeetingParams& prm, Rng& rng) {
    const auto& names = prm.name_pool.empty() ? default_name_pool() : prm.name_pool;
    const auto& places = prm.location_pool.empty() ? default_location_pool() : prm.location_pool;
    const int n = static_cast<int>(rng.between(prm.min_friends, prm.max_friends));
    MeetingProblem p;
    p.locations = draw_distinct(rng, places, static_cast<std::size_t>(n + 1));
    p.base = p.locations.front();
    const std::size_t L = p.locations.size();
    p.travel.assign(L, std::vector<int>(L, 0));
    for (std::size_t i = 0; i < L; ++i) {
        for (std::size_t j = i + 1; j < L; ++j) {
            const int t = static_cast<int>(rng.between(5, 30));
            p.travel[i][j] = t;
            p.travel[j][i] = std::max(1, t + static_cast<int>(rng.between(-2, 2)));
        }
    }
    const auto who = draw_distinct(rng, names, static_cast<std::size_t>(n));
    static constexpr int kMeet[] = {15, 30, 45, 60, 75, 90, 105, 120};
    for (int i = 0; i < n; ++i) {
        Friend f;
        f.name = who[static_cast<std::size_t>(i)];
        f.location = p.locations[static_cast<std::size_t>(i + 1)];
        f.min_meet = kMeet[rng.index(std::size(kMeet))];
        p.friends.push_back(f);
    }
    // Fix a target route through a random subset, then give everyone else a
    // random window.
    std::vector<std::size_t> order(p.friends.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const std::size_t k = static_cast<std::size_t>(rng.between(std::max(1, n - 2), n));
    std::string loc = p.base;
    int now = p.day_start;
    for (std::size_t r = 0; r < order.size(); ++r) {
        Friend& f = p.friends[order[r]];
        if (r < k) {
            const int arrive = now + p.travel_time(loc, f.location);
            f.lo = round_up(arrive + static_cast<int>(rng.between(0, 120)), 15);
            f.hi = std::min(p.day_end, f.lo + f.min_meet + round_up(static_cast<int>(rng.between(0, 90)), 15));
            if (f.hi - f.lo < f.min_meet) return std::nullopt;
            now = f.lo + f.min_meet;
            loc = f.location;
        } else {
            f.lo = round_up(static_cast<int>(rng.between(p.day_start, p.day_end - 60)), 15);
            f.hi = std::min(p.day_end, f.lo + f.min_meet + round_up(static_cast<int>(rng.between(0, 120)), 15));
            if (f.hi - f.lo < f.min_meet) f.min_meet = f.hi - f.lo;
            if (f.min_meet <= 0) return std::nullopt;
        }
    }
    auto sols = solve(p);
    if (sols.empty()) return std::nullopt;
    if (prm.require_unique && sols.size() != 1) return std::nullopt;
    return ScheduleInstance{p, sols.front(), 0, 0};
}

inline std::optional<ScheduleInstance> calendar_attempt(const CalendarParams& prm, Rng& rng) {
    static const std::vector<std::string> weekdays{"Monday", "Tuesday", "Wednesday", "Thursday", "Friday"};
    const auto& names = prm.name_pool.empty() ? default_name_pool() : prm.name_pool;
    CalendarProblem p;
    p.earliest_preference = prm.earliest_preference;
    const int n = static_cast<int>(rng.between(prm.min_participants, prm.max_participants));
    p.participants = draw_distinct(rng, names, static_cast<std::size_t>(n));
    const int days = static_cast<int>(rng.between(prm.min_days, prm.max_days));
    require(days >= 1 && days <= static_cast<int>(weekdays.size()), ErrorKind::InvalidArgument, "calendar day count");
    const std::size_t first = rng.index(weekdays.size() - static_cast<std::size_t>(days) + 1);
    for (int d = 0; d < days; ++d) p.candidate_days.push_back(weekdays[first + static_cast<std::size_t>(d)]);
    p.meeting_len = rng.pick(prm.meeting_lengths);
    const int slots = (p.work_hi - p.work_lo - p.meeting_len) / 30 + 1;
    CalendarSlot gold = prm.gold.value_or(CalendarSlot{static_cast<int>(rng.index(static_cast<std::size_t>(days))),
                                                       p.work_lo + 30 * static_cast<int>(rng.index(static_cast<std::size_t>(slots)))});
    require(gold.day >= 0 && gold.day < days && gold.start >= p.work_lo && gold.start + p.meeting_len <= p.work_hi,
            ErrorKind::InvalidArgument, "gold slot outside the candidate days or workday");
    // Cover every other half hour with someone's meeting; the target slot
    // itself is never covered.
    for (int d = 0; d < days; ++d) {
        int t = p.work_lo;
        while (t < p.work_hi) {
            if (d == gold.day && t >= gold.start && t < gold.start + p.meeting_len) {
                t = gold.start + p.meeting_len;
                continue;
            }
            int limit = p.work_hi;
            if (d == gold.day && t < gold.start) limit = gold.start;
            const int len = std::min(limit - t, 30 * static_cast<int>(rng.between(1, 4)));
            if (!rng.chance(prm.gap_prob)) {
                const std::string& who = rng.pick(p.participants);
                if (!p.busy.empty() && p.busy.back().participant == who && p.busy.back().day == d && p.busy.back().hi == t) {
                    p.busy.back().hi = t + len;
                } else {
                    p.busy.push_back({who, d, t, t + len});
                }
            }
            t += len;
        }
    }
    std::stable_sort(p.busy.begin(), p.busy.end(), [&](const BusyBlock& a, const BusyBlock& b) {
        auto ia = std::find(p.participants.begin(), p.participants.end(), a.participant);
        auto ib = std::find(p.participants.begin(), p.participants.end(), b.participant);
        return std::tuple(ia, a.day, a.lo) < std::tuple(ib, b.day, b.lo);
    });
    auto sols = solve(p);
    if (sols.empty()) return std::nullopt;
    if (p.earliest_preference) return ScheduleInstance{p, sols.front(), 0, 0};
    if (prm.require_unique && sols.size() != 1) return std::nullopt;
    auto it = std::find_if(sols.begin(), sols.end(), [&](const Itinerary& s) { return s.slot == gold; });
    return ScheduleInstance{p, it != sols.end() ? *it : sols.front(), 0, 0};
}

template <typename Params, typename Attempt>
ScheduleInstance generate_with_retries(const char* domain, const Params& prm, std::uint64_t seed, Attempt attempt) {
    for (int a = 0; a < prm.max_attempts; ++a) {
        Rng rng(derive_seed(seed, domain, static_cast<std::uint64_t>(a)));
        if (auto inst = attempt(prm, rng)) {
            inst->seed = seed;
            inst->attempts = a + 1;
            return *inst;
        }
    }
    fail(ErrorKind::ExhaustedRetries, std::string(domain) + " generation failed after " +
                                          std::to_string(prm.max_attempts) + " attempts");
}

}  // namespace detail

inline ScheduleInstance generate_instance(const TripParams& prm, std::uint64_t seed) {
    return detail::generate_with_retries("trip", prm, seed, detail::trip_attempt);
}

inline ScheduleInstance generate_instance(const MeetingParams& prm, std::uint64_t seed) {
    return detail::generate_with_retries("meeting", prm, seed, detail::meeting_attempt);
}

inline ScheduleInstance generate_instance(const CalendarParams& prm, std::uint64_t seed) {
    return detail::generate_with_retries("calendar", prm, seed, detail::calendar_attempt);
}

// -------------------------------------------------------------- rendering

/// A constraint and the sentence stating it in the prompt.
struct ConstraintSentence {
    std::string constraint;
    std::string sentence;
};

struct RenderedSchedule {
    std::string prompt;
    std::string answer;
    std::vector<ConstraintSentence> sentences;
};

namespace detail {

inline std::string pick_template(const std::vector<std::string>& variants, std::uint64_t variant, std::size_t slot) {
    if (variant == 0) return variants.front();
    Rng rng(derive_seed(variant, "template", slot));
    return variants[rng.index(variants.size())];
}

inline std::string fill(std::string t, const std::vector<std::pair<std::string, std::string>>& values) {
    for (const auto& [k, v] : values) t = text::replace_all(std::move(t), "{" + k + "}", v);
    return t;
}

inline std::string list_with_and(const std::vector<std::string>& items, const char* conj = "and") {
    if (items.size() <= 1) return items.empty() ? "" : items.front();
    std::vector<std::string> head(items.begin(), items.end() - 1);
    return text::join(head, ", ") + " " + conj + " " + items.back();
}

}  // namespace detail

/// Trip templates; variant 0 reproduces the reference phrasing.
struct TripTemplates {
    std::vector<std::string> intro{"You plan to visit {n} {region} cities for {days} days in total.",
                                   "Visit {n} distinct {region} cities over {days} days."};
    std::vector<std::string> direct{"You only take direct flights to commute between cities."};
    std::vector<std::string> window{"You must be in {city} between day {lo} and day {hi} of your trip.",
                                    "Between day {lo} and day {hi} of the trip you need to be in {city}.",
                                    "Plan to be in {city} from day {lo} through day {hi}."};
    std::vector<std::string> stay{"You want to stay in {city} for {d} days.", "Stay in {city} for {d} days.",
                                  "You would like to spend {d} days in {city}."};
    std::vector<std::string> flights_header{"Here are the cities that have direct flights:"};
    std::vector<std::string> closing{
        "Find a trip plan of visiting the cities for {days} days by taking direct flights to commute between them."};
};

inline RenderedSchedule render_nl(const TripProblem& p, const Itinerary& solution, std::uint64_t variant = 0) {
    TripTemplates t;
    RenderedSchedule r;
    const std::string n = std::to_string(p.stays.size()), days = std::to_string(p.total_days);
    std::size_t slot = 0;
    auto sentence = [&](std::string id, const std::vector<std::string>& variants,
                        const std::vector<std::pair<std::string, std::string>>& values) {
        std::string s = detail::fill(detail::pick_template(variants, variant, slot++), values);
        r.sentences.push_back({std::move(id), s});
        return s;
    };
    r.prompt = sentence("total(" + n + "," + days + ")", t.intro, {{"n", n}, {"region", p.region}, {"days", days}});
    r.prompt += " " + sentence("direct flights only", t.direct, {});
    bool first = true;
    for (const auto& w : p.windows) {
        const std::string lo = std::to_string(w.lo), hi = std::to_string(w.hi);
        // The reference prompt has no space before the first window sentence.
        r.prompt += (first ? "" : " ") +
                    sentence("window(" + w.city + "," + lo + "," + hi + ")", t.window, {{"city", w.city}, {"lo", lo}, {"hi", hi}});
        first = false;
    }
    for (const auto& [city, d] : p.stays) {
        const std::string ds = std::to_string(d);
        r.prompt += " " + sentence("duration(" + city + "," + ds + ")", t.stay, {{"city", city}, {"d", ds}});
    }
    std::vector<std::string> pairs;
    for (const auto& [a, b] : p.flights) {
        const std::string s = a + " and " + b;
        r.sentences.push_back({"flight(" + a + "," + b + ")", s});
        pairs.push_back(s);
    }
    r.prompt += "\n\n" + sentence("flight list", t.flights_header, {}) + "\n" + text::join(pairs, ", ") + ".";
    r.prompt += "\n\n" + sentence("closing", t.closing, {{"days", days}});

    r.answer = "Here is the trip plan for visiting the " + n + " " + p.region + " cities for " + days + " days:";
    const auto& segs = solution.segments;
    for (std::size_t i = 0; i < segs.size(); ++i) {
        const auto& s = segs[i];
        const std::string range = std::to_string(s.lo) + "-" + std::to_string(s.hi);
        const std::string len = std::to_string(s.hi - s.lo + 1);
        if (i == 0) {
            r.answer += "\n**Day " + range + ":** Arriving in " + s.city + " and visit " + s.city + " for " + len + " days.";
        } else {
            r.answer += "\n**Day " + std::to_string(s.lo) + ":** Fly from " + segs[i - 1].city + " to " + s.city + ".";
            r.answer += "\n**Day " + range + ":** Visit " + s.city + " for " + len + " days.";
        }
    }
    return r;
}

struct MeetingTemplates {
    std::vector<std::string> intro{
        "You are visiting {city} for the day and want to meet as many friends as possible. Solve the problem by "
        "considering various different schedules and picking the best one to optimize your goals.",
        "You are spending a day in {city} and would like to meet as many of your friends as you can. Work out the "
        "schedule that lets you meet the most of them."};
    std::vector<std::string> arrival{"You arrive at {base} at {time}.", "Your day starts at {base} at {time}."};
    std::vector<std::string> availability{"{name} will be at {loc} from {lo} to {hi}.",
                                          "{name} is available at {loc} between {lo} and {hi}."};
    std::vector<std::string> minimum{"You'd like to meet {name} for a minimum of {m} minutes.",
                                     "A meeting with {name} should last at least {m} minutes."};
    std::vector<std::string> travel_header{"Travel distances (in minutes):"};
    std::vector<std::string> day_end{"You must be done by {time}."};
};

inline RenderedSchedule render_nl(const MeetingProblem& p, const Itinerary& solution, std::uint64_t variant = 0) {
    MeetingTemplates t;
    RenderedSchedule r;
    std::size_t slot = 0;
    auto sentence = [&](std::string id, const std::vector<std::string>& variants,
                        const std::vector<std::pair<std::string, std::string>>& values) {
        std::string s = detail::fill(detail::pick_template(variants, variant, slot++), values);
        r.sentences.push_back({std::move(id), s});
        return s;
    };
    r.prompt = sentence("goal", t.intro, {{"city", p.city}}) + "\n\n" + sentence("travel", t.travel_header, {});
    for (std::size_t i = 0; i < p.locations.size(); ++i) {
        for (std::size_t j = 0; j < p.locations.size(); ++j) {
            if (i == j) continue;
            const std::string s = p.locations[i] + " to " + p.locations[j] + ": " + std::to_string(p.travel[i][j]) + ".";
            r.sentences.push_back({"travel(" + p.locations[i] + "," + p.locations[j] + ")", s});
            r.prompt += "\n" + s;
        }
    }
    r.prompt += "\n\nCONSTRAINTS:\n" +
                sentence("start(" + p.base + "," + clock12(p.day_start) + ")", t.arrival,
                         {{"base", p.base}, {"time", clock12(p.day_start)}});
    r.prompt += "\n" + sentence("end(" + clock12(p.day_end) + ")", t.day_end, {{"time", clock12(p.day_end)}});
    for (const auto& f : p.friends) {
        r.prompt += "\n" + sentence("availability(" + f.name + ")", t.availability,
                                    {{"name", f.name}, {"loc", f.location}, {"lo", clock12(f.lo)}, {"hi", clock12(f.hi)}});
        r.prompt += " " + sentence("min meeting(" + f.name + "," + std::to_string(f.min_meet) + ")", t.minimum,
                                   {{"name", f.name}, {"m", std::to_string(f.min_meet)}});
    }

    r.answer = "SOLUTION: You start at " + p.base + " at " + clock12(p.day_start) + ".";
    std::string loc = p.base;
    int now = p.day_start;
    for (const auto& v : solution.visits) {
        const Friend* f = p.find(v.friend_name);
        if (!f) continue;
        const int travel = p.travel_time(loc, f->location);
        r.answer += " You travel to " + f->location + " in " + std::to_string(travel) + " minutes and arrive at " +
                    clock12(now + travel) + ".";
        if (v.start > now + travel) r.answer += " You wait until " + clock12(v.start) + ".";
        r.answer += " You meet " + f->name + " for " + std::to_string(v.end - v.start) + " minutes from " +
                    clock12(v.start) + " to " + clock12(v.end) + ".";
        loc = f->location;
        now = v.end;
    }
    return r;
}

struct CalendarTemplates {
    std::vector<std::string> task{
        "You need to schedule a meeting for {people} for {len} between the work hours of {lo} to {hi} on {days}.",
        "Find a {len} slot for {people} within working hours ({lo} to {hi}) on {days}."};
    std::vector<std::string> header{"Here are the existing schedules for everyone during the days:"};
    std::vector<std::string> busy{"{name} has meetings on {blocks}.", "{name} is busy on {blocks}."};
    std::vector<std::string> free_all{"{name} is free the entire time.", "{name} has no meetings."};
    std::vector<std::string> earliest{"{people} would like to meet at their earliest availability."};
    std::vector<std::string> closing{"Find a time that works for everyone's schedule and constraints."};
};

inline std::string duration_phrase(int minutes) {
    if (minutes == 30) return "half an hour";
    if (minutes == 60) return "one hour";
    if (minutes % 60 == 0) return std::to_string(minutes / 60) + " hours";
    return std::to_string(minutes) + " minutes";
}

inline RenderedSchedule render_nl(const CalendarProblem& p, const Itinerary& solution, std::uint64_t variant = 0) {
    CalendarTemplates t;
    RenderedSchedule r;
    std::size_t slot = 0;
    auto sentence = [&](std::string id, const std::vector<std::string>& variants,
                        const std::vector<std::pair<std::string, std::string>>& values) {
        std::string s = detail::fill(detail::pick_template(variants, variant, slot++), values);
        r.sentences.push_back({std::move(id), s});
        return s;
    };
    const std::string people = detail::list_with_and(p.participants);
    const std::string days = p.candidate_days.size() == 1 ? p.candidate_days.front()
                                                          : "either " + detail::list_with_and(p.candidate_days, "or");
    r.prompt = sentence("meeting(" + std::to_string(p.meeting_len) + ")", t.task,
                        {{"people", people},
                         {"len", duration_phrase(p.meeting_len)},
                         {"lo", clock24(p.work_lo)},
                         {"hi", clock24(p.work_hi)},
                         {"days", days}});
    r.prompt += "\n\n" + sentence("schedules", t.header, {});
    for (const auto& name : p.participants) {
        std::vector<std::string> per_day;
        std::vector<std::string> ids;
        for (int d = 0; d < static_cast<int>(p.candidate_days.size()); ++d) {
            std::vector<std::string> blocks;
            for (const auto& b : p.busy) {
                if (b.participant != name || b.day != d) continue;
                blocks.push_back(clock24(b.lo) + " to " + clock24(b.hi));
                ids.push_back("busy(" + name + "," + p.candidate_days[static_cast<std::size_t>(d)] + "," + clock24(b.lo) +
                              "," + clock24(b.hi) + ")");
            }
            if (!blocks.empty()) per_day.push_back(p.candidate_days[static_cast<std::size_t>(d)] + " during " + text::join(blocks, ", "));
        }
        if (per_day.empty()) {
            r.prompt += "\n" + sentence("free(" + name + ")", t.free_all, {{"name", name}});
        } else {
            const std::string s = sentence("busy(" + name + ")", t.busy, {{"name", name}, {"blocks", text::join(per_day, "; ")}});
            for (auto& id : ids) r.sentences.push_back({std::move(id), s});
            r.prompt += "\n" + s;
        }
    }
    if (p.earliest_preference) r.prompt += "\n" + sentence("earliest", t.earliest, {{"people", people}});
    r.prompt += "\n\n" + sentence("closing", t.closing, {});
    if (solution.slot) {
        const auto& s = *solution.slot;
        r.answer = "Here is the proposed time: " + p.candidate_days[static_cast<std::size_t>(s.day)] + ", " +
                   clock24(s.start) + " - " + clock24(s.start + p.meeting_len);
    }
    return r;
}

inline RenderedSchedule render_nl(const ScheduleProblem& p, const Itinerary& solution, std::uint64_t variant = 0) {
    return std::visit([&](const auto& x) { return render_nl(x, solution, variant); }, p);
}

/// Constraint ids the problem implies, enumerated independently of the
/// renderer; the audit checks each has a sentence occurring once in the
/// prompt that names its values.
inline std::vector<std::string> audit_prompt(const ScheduleProblem& problem, const RenderedSchedule& r) {
    struct Expect {
        std::string id;
        std::vector<std::string> mentions;
    };
    std::vector<Expect> expected;
    if (const auto* p = std::get_if<TripProblem>(&problem)) {
        expected.push_back({"total(" + std::to_string(p->stays.size()) + "," + std::to_string(p->total_days) + ")",
                            {std::to_string(p->stays.size()), std::to_string(p->total_days)}});
        for (const auto& w : p->windows)
            expected.push_back({"window(" + w.city + "," + std::to_string(w.lo) + "," + std::to_string(w.hi) + ")",
                                {w.city, std::to_string(w.lo), std::to_string(w.hi)}});
        for (const auto& [c, d] : p->stays)
            expected.push_back({"duration(" + c + "," + std::to_string(d) + ")", {c, std::to_string(d)}});
        for (const auto& [a, b] : p->flights) expected.push_back({"flight(" + a + "," + b + ")", {a, b}});
    } else if (const auto* p = std::get_if<MeetingProblem>(&problem)) {
        expected.push_back({"start(" + p->base + "," + clock12(p->day_start) + ")", {p->base, clock12(p->day_start)}});
        expected.push_back({"end(" + clock12(p->day_end) + ")", {clock12(p->day_end)}});
        for (std::size_t i = 0; i < p->locations.size(); ++i)
            for (std::size_t j = 0; j < p->locations.size(); ++j)
                if (i != j)
                    expected.push_back({"travel(" + p->locations[i] + "," + p->locations[j] + ")",
                                        {p->locations[i], p->locations[j], std::to_string(p->travel[i][j])}});
        for (const auto& f : p->friends) {
            expected.push_back({"availability(" + f.name + ")", {f.name, f.location, clock12(f.lo), clock12(f.hi)}});
            expected.push_back({"min meeting(" + f.name + "," + std::to_string(f.min_meet) + ")",
                                {f.name, std::to_string(f.min_meet)}});
        }
    } else if (const auto* p = std::get_if<CalendarProblem>(&problem)) {
        expected.push_back({"meeting(" + std::to_string(p->meeting_len) + ")",
                            {duration_phrase(p->meeting_len), clock24(p->work_lo), clock24(p->work_hi)}});
        for (const auto& b : p->busy) {
            const auto& day = p->candidate_days[static_cast<std::size_t>(b.day)];
            expected.push_back({"busy(" + b.participant + "," + day + "," + clock24(b.lo) + "," + clock24(b.hi) + ")",
                                {b.participant, day, clock24(b.lo) + " to " + clock24(b.hi)}});
        }
        if (p->earliest_preference) expected.push_back({"earliest", {"earliest"}});
    }
    std::vector<std::string> problems;
    for (const auto& e : expected) {
        auto it = std::find_if(r.sentences.begin(), r.sentences.end(), [&](const auto& s) { return s.constraint == e.id; });
        if (it == r.sentences.end()) {
            problems.push_back("no sentence for " + e.id);
            continue;
        }
        std::size_t count = 0, pos = 0;
        while ((pos = r.prompt.find(it->sentence, pos)) != std::string::npos) {
            ++count;
            pos += it->sentence.size();
        }
        if (count != 1) problems.push_back(e.id + " stated " + std::to_string(count) + " times");
        for (const auto& m : e.mentions)
            if (!text::contains(it->sentence, m)) problems.push_back(e.id + " sentence omits " + m);
    }
    return problems;
}

// ----------------------------------------------------------------- parsing

namespace detail {

inline std::string strip_markup(std::string s) {
    s = text::replace_all(std::move(s), "**", "");
    s = text::replace_all(std::move(s), "\xE2\x80\x93", "-");
    return s;
}

}  // namespace detail

/// "**Day 1-6:** ... visit Nairobi for 6 days." lines; flight lines are
/// skipped. Throws ParseFailure when no segment line is found.
inline Itinerary parse_trip_answer(std::string_view answer) {
    static const std::regex seg(R"(^\s*Day\s+(\d+)\s*-\s*(\d+)\s*:\s*(.*)$)", std::regex::icase);
    static const std::regex city(R"(visit\s+(.+?)\s+for\s+\d+\s+days?)", std::regex::icase);
    static const std::regex arrive(R"(arriv(?:e|ing)\s+in\s+(.+?)(?:\s+and\b|[.,]|$))", std::regex::icase);
    Itinerary it;
    std::size_t offset = 0;
    for (const auto& raw : text::split(answer, '\n')) {
        const std::size_t line_at = offset;
        offset += raw.size() + 1;
        const std::string line = detail::strip_markup(raw);
        std::smatch m;
        if (!std::regex_match(line, m, seg)) continue;
        const std::string rest = m[3].str();
        std::smatch c;
        std::string name;
        if (std::regex_search(rest, c, city)) {
            name = c[1].str();
        } else if (std::regex_search(rest, c, arrive)) {
            name = c[1].str();
        } else {
            throw ParseFailure(line_at, "city name in day segment");
        }
        it.segments.push_back({text::trim(name), std::stoi(m[1].str()), std::stoi(m[2].str())});
    }
    if (it.segments.empty()) throw ParseFailure(0, "a '**Day a-b:**' segment line");
    return it;
}

inline Itinerary parse_meeting_answer(std::string_view answer) {
    static const std::regex meet(
        R"(meet\s+(.+?)\s+for\s+\d+\s+minutes\s+from\s+(\d{1,2}:\d{2}\s*[AaPp][Mm])\s+to\s+(\d{1,2}:\d{2}\s*[AaPp][Mm]))",
        std::regex::icase);
    Itinerary it;
    const std::string s(answer);
    for (auto i = std::sregex_iterator(s.begin(), s.end(), meet); i != std::sregex_iterator(); ++i) {
        const auto& m = *i;
        auto a = parse_clock(m[2].str()), b = parse_clock(m[3].str());
        if (!a || !b) throw ParseFailure(static_cast<std::size_t>(m.position(0)), "clock time");
        it.visits.push_back({text::trim(m[1].str()), *a, *b});
    }
    if (it.visits.empty()) {
        if (text::contains(text::to_lower_ascii(s), "solution")) return it;
        throw ParseFailure(0, "'You meet X for N minutes from T to T'");
    }
    return it;
}

inline Itinerary parse_calendar_answer(std::string_view answer, const CalendarProblem& p) {
    static const std::regex slot(R"(([A-Za-z]+)\s*,\s*(\d{1,2}:\d{2})\s*-\s*(\d{1,2}:\d{2}))");
    const std::string s = detail::strip_markup(std::string(answer));
    std::smatch m;
    if (!std::regex_search(s, m, slot)) throw ParseFailure(0, "'Day, HH:MM - HH:MM'");
    auto day = std::find(p.candidate_days.begin(), p.candidate_days.end(), m[1].str());
    if (day == p.candidate_days.end()) throw ParseFailure(static_cast<std::size_t>(m.position(1)), "a candidate day");
    auto a = parse_clock(m[2].str()), b = parse_clock(m[3].str());
    if (!a || !b) throw ParseFailure(static_cast<std::size_t>(m.position(2)), "clock time");
    if (*b - *a != p.meeting_len) throw ParseFailure(static_cast<std::size_t>(m.position(3)), "slot of the meeting length");
    Itinerary it;
    it.slot = CalendarSlot{static_cast<int>(day - p.candidate_days.begin()), *a};
    return it;
}

inline Itinerary parse_itinerary(const ScheduleProblem& p, std::string_view answer) {
    switch (p.index()) {
        case 0: return parse_trip_answer(answer);
        case 1: return parse_meeting_answer(answer);
        default: return parse_calendar_answer(answer, std::get<CalendarProblem>(p));
    }
}

// -------------------------------------------------------------------- json

inline json to_json(const ScheduleProblem& problem) {
    json j;
    j["domain"] = domain_name(problem);
    if (const auto* p = std::get_if<TripProblem>(&problem)) {
        j["total_days"] = p->total_days;
        j["region"] = p->region;
        j["stays"] = json::array();
        for (const auto& [c, d] : p->stays) j["stays"].push_back({{"city", c}, {"days", d}});
        j["flights"] = json::array();
        for (const auto& [a, b] : p->flights) j["flights"].push_back({a, b});
        j["windows"] = json::array();
        for (const auto& w : p->windows) j["windows"].push_back({{"city", w.city}, {"lo", w.lo}, {"hi", w.hi}});
    } else if (const auto* p = std::get_if<MeetingProblem>(&problem)) {
        j["city"] = p->city;
        j["base"] = p->base;
        j["day_start"] = p->day_start;
        j["day_end"] = p->day_end;
        j["locations"] = p->locations;
        j["travel"] = p->travel;
        j["friends"] = json::array();
        for (const auto& f : p->friends)
            j["friends"].push_back({{"name", f.name}, {"location", f.location}, {"lo", f.lo}, {"hi", f.hi}, {"min_meet", f.min_meet}});
    } else if (const auto* p = std::get_if<CalendarProblem>(&problem)) {
        j["participants"] = p->participants;
        j["meeting_len"] = p->meeting_len;
        j["work_lo"] = p->work_lo;
        j["work_hi"] = p->work_hi;
        j["candidate_days"] = p->candidate_days;
        j["earliest_preference"] = p->earliest_preference;
        j["busy"] = json::array();
        for (const auto& b : p->busy)
            j["busy"].push_back({{"participant", b.participant}, {"day", b.day}, {"lo", b.lo}, {"hi", b.hi}});
    }
    return j;
}

inline ScheduleProblem schedule_problem_from_json(const json& j) {
    try {
        const std::string domain = j.at("domain").get<std::string>();
        if (domain == "trip") {
            TripProblem p;
            p.total_days = j.at("total_days").get<int>();
            p.region = j.value("region", std::string("global"));
            for (const auto& s : j.at("stays")) p.stays.emplace_back(s.at("city").get<std::string>(), s.at("days").get<int>());
            for (const auto& f : j.at("flights")) p.flights.emplace_back(f.at(0).get<std::string>(), f.at(1).get<std::string>());
            for (const auto& w : j.value("windows", json::array()))
                p.windows.push_back({w.at("city").get<std::string>(), w.at("lo").get<int>(), w.at("hi").get<int>()});
            return p;
        }
        if (domain == "meeting") {
            MeetingProblem p;
            p.city = j.value("city", p.city);
            p.base = j.at("base").get<std::string>();
            p.day_start = j.value("day_start", p.day_start);
            p.day_end = j.value("day_end", p.day_end);
            p.locations = j.at("locations").get<std::vector<std::string>>();
            p.travel = j.at("travel").get<std::vector<std::vector<int>>>();
            for (const auto& f : j.at("friends"))
                p.friends.push_back({f.at("name").get<std::string>(), f.at("location").get<std::string>(), f.at("lo").get<int>(),
                                     f.at("hi").get<int>(), f.at("min_meet").get<int>()});
            return p;
        }
        if (domain == "calendar") {
            CalendarProblem p;
            p.participants = j.at("participants").get<std::vector<std::string>>();
            p.meeting_len = j.at("meeting_len").get<int>();
            p.work_lo = j.value("work_lo", p.work_lo);
            p.work_hi = j.value("work_hi", p.work_hi);
            p.candidate_days = j.at("candidate_days").get<std::vector<std::string>>();
            p.earliest_preference = j.value("earliest_preference", false);
            for (const auto& b : j.value("busy", json::array()))
                p.busy.push_back({b.at("participant").get<std::string>(), b.at("day").get<int>(), b.at("lo").get<int>(),
                                  b.at("hi").get<int>()});
            return p;
        }
        fail(ErrorKind::InvalidArgument, "unknown schedule domain " + domain);
    } catch (const json::exception& e) {
        fail(ErrorKind::InvalidArgument, std::string("schedule problem: ") + e.what());
    }
}

inline json to_json(const Itinerary& it) {
    json j = json::object();
    if (!it.segments.empty()) {
        j["segments"] = json::array();
        for (const auto& s : it.segments) j["segments"].push_back({{"city", s.city}, {"lo", s.lo}, {"hi", s.hi}});
    }
    if (!it.visits.empty()) {
        j["visits"] = json::array();
        for (const auto& v : it.visits) j["visits"].push_back({{"friend", v.friend_name}, {"start", v.start}, {"end", v.end}});
    }
    if (it.slot) j["slot"] = {{"day", it.slot->day}, {"start", it.slot->start}};
    return j;
}

}  // namespace agentsynth
