#pragma once

// Calendar dates as a serial day count, ISO-8601 parsing, ACT/365 year
// fractions. Rates and spreads are continuously compounded throughout.

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace cppim {

class Date {
public:
    Date() = default;
    explicit Date(std::int64_t serial) : serial_(serial) {}

    Date(int y, int m, int d) : serial_(days_from_civil(y, m, d)) {}

    static Date parse_iso(const std::string& s) {
        int y = 0, m = 0, d = 0;
        if (std::sscanf(s.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || m < 1 || m > 12 || d < 1 || d > 31)
            throw std::invalid_argument("bad ISO date: " + s);
        return Date(y, m, d);
    }

    std::string iso() const {
        int y, m, d;
        civil_from_days(serial_, y, m, d);
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
        return buf;
    }

    std::int64_t serial() const { return serial_; }

    Date operator+(std::int64_t days) const { return Date(serial_ + days); }
    std::int64_t operator-(Date o) const { return serial_ - o.serial_; }
    auto operator<=>(const Date&) const = default;

private:
    // Howard Hinnant's civil-calendar algorithms (days since 1970-01-01).
    static std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
        y -= m <= 2;
        const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
    }

    static void civil_from_days(std::int64_t z, int& yy, int& mm, int& dd) {
        z += 719468;
        const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp + (mp < 10 ? 3 : -9);
        yy = static_cast<int>(y + (m <= 2));
        mm = static_cast<int>(m);
        dd = static_cast<int>(d);
    }

    std::int64_t serial_ = 0;
};

// ACT/365 with continuous compounding everywhere.
inline double year_fraction(Date a, Date b) { return double(b - a) / 365.0; }

} // namespace cppim
