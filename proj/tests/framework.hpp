#pragma once

// Minimal always-on test harness: never compiled out in Release, one line per
// case, nonzero exit if anything failed. A failed REQUIRE aborts the current
// case and moves on to the next one.

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace testfw {

struct Failure {
    std::string msg;
};

struct Case {
    const char* name;
    void (*fn)();
};

inline std::vector<Case>& cases() {
    static std::vector<Case> c;
    return c;
}

struct Registrar {
    Registrar(const char* name, void (*fn)()) { cases().push_back({name, fn}); }
};

inline int run_all() {
    int failed = 0;
    for (const auto& c : cases()) {
        try {
            c.fn();
            std::cout << "[ ok ] " << c.name << "\n";
        } catch (const Failure& f) {
            ++failed;
            std::cout << "[FAIL] " << c.name << ": " << f.msg << "\n";
        } catch (const std::exception& e) {
            ++failed;
            std::cout << "[FAIL] " << c.name << ": unexpected exception: " << e.what() << "\n";
        }
    }
    std::cout << cases().size() - failed << "/" << cases().size() << " cases passed\n";
    return failed == 0 ? 0 : 1;
}

inline bool close_abs(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

inline bool close_rel(double a, double b, double tol) {
    const double scale = std::max(std::fabs(a), std::fabs(b));
    return std::fabs(a - b) <= tol * std::max(scale, 1e-12);
}

}  // namespace testfw

#define TEST_CASE(name)                                                       \
    static void testfw_fn_##name();                                           \
    static ::testfw::Registrar testfw_reg_##name(#name, &testfw_fn_##name);   \
    static void testfw_fn_##name()

#define TESTFW_FAIL(streamed)                    \
    do {                                         \
        std::ostringstream os_;                  \
        os_ << __FILE__ << ":" << __LINE__ << " " << streamed; \
        throw ::testfw::Failure{os_.str()};      \
    } while (0)

#define REQUIRE(cond)                                     \
    do {                                                  \
        if (!(cond)) TESTFW_FAIL("REQUIRE(" #cond ")");   \
    } while (0)

#define REQUIRE_CLOSE(a, b, tol)                                                            \
    do {                                                                                    \
        const double va_ = (a), vb_ = (b);                                                  \
        if (!::testfw::close_abs(va_, vb_, (tol)))                                          \
            TESTFW_FAIL("REQUIRE_CLOSE(" #a ", " #b "): " << va_ << " vs " << vb_);         \
    } while (0)

#define REQUIRE_REL(a, b, tol)                                                              \
    do {                                                                                    \
        const double va_ = (a), vb_ = (b);                                                  \
        if (!::testfw::close_rel(va_, vb_, (tol)))                                          \
            TESTFW_FAIL("REQUIRE_REL(" #a ", " #b "): " << va_ << " vs " << vb_);           \
    } while (0)

#define REQUIRE_THROWS_AS(expr, Ex)                                     \
    do {                                                                \
        bool threw_ = false;                                            \
        try {                                                           \
            (void)(expr);                                               \
        } catch (const Ex&) {                                           \
            threw_ = true;                                              \
        }                                                               \
        if (!threw_) TESTFW_FAIL(#expr " did not throw " #Ex);          \
    } while (0)

#define TEST_MAIN() \
    int main() { return ::testfw::run_all(); }
