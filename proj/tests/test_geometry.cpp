#include <doctest.h>

#include "tipsynth/geometry.hpp"

using namespace tipsynth;

TEST_CASE("standard keyboard layout") {
    const KeyboardGeometry geom = build_standard_keyboard();

    int white = 0, black = 0;
    for (const KeySpec& k : geom.keys()) (k.is_black ? black : white)++;
    CHECK(geom.keys().size() == 88);
    CHECK(white == 52);
    CHECK(black == 36);
    CHECK(geom.white_key_width() == doctest::Approx(23.5));
    CHECK(geom.span_y() == doctest::Approx(52 * 23.5));  // 1222 mm

    // monotone Y extents
    for (int k = 1; k < kNumKeys; ++k) {
        CHECK(geom.key(k).y_center() > geom.key(k - 1).y_center());
        CHECK(geom.key(k).y_min < geom.key(k).y_max);
    }

    // white keys tile with no gaps
    double prev_max = 0.0;
    for (const KeySpec& k : geom.keys()) {
        if (k.is_black) continue;
        CHECK(k.y_min == doctest::Approx(prev_max));
        prev_max = k.y_max;
    }

    // black keys never overlap each other
    for (int a = 0; a < kNumKeys; ++a) {
        if (!geom.key(a).is_black) continue;
        for (int b = a + 1; b < kNumKeys; ++b) {
            if (!geom.key(b).is_black) continue;
            const bool disjoint =
                geom.key(a).y_max <= geom.key(b).y_min || geom.key(b).y_max <= geom.key(a).y_min;
            CHECK(disjoint);
        }
    }
}

TEST_CASE("keyboard config validation") {
    KeyboardConfig bad;
    bad.white_key_width = -1.0;
    CHECK_THROWS_AS(build_standard_keyboard(bad), ConfigError);
}

TEST_CASE("key_at containment and precedence") {
    const KeyboardGeometry geom = build_standard_keyboard();

    // every key center maps to itself
    for (int k = 0; k < kNumKeys; ++k) {
        const KeySpec& spec = geom.key(k);
        const Vec3 center{spec.x_center(), spec.y_center(), 0.0};
        REQUIRE(geom.key_at(center).has_value());
        CHECK(*geom.key_at(center) == k);
    }

    // off keyboard
    CHECK_FALSE(geom.key_at({10.0, geom.key(87).y_max + 5.0, 0.0}).has_value());
    CHECK_FALSE(geom.key_at({10.0, -1.0, 0.0}).has_value());
    CHECK_FALSE(geom.key_at({geom.key(0).x_max + 1.0, 30.0, 0.0}).has_value());

    // shared white boundary resolves to the lower index (scan at the front
    // where no black key interferes)
    for (int k = 0; k < kNumKeys; ++k) {
        const KeySpec& spec = geom.key(k);
        if (spec.is_black) continue;
        const Vec3 boundary{1.0, spec.y_max, 0.0};
        const auto hit = geom.key_at(boundary);
        if (hit) CHECK(*hit >= k);  // claimed by k..next; lower-index rule below
    }
    // explicit case: boundary between the first two whites belongs to the lower
    const KeySpec& first_white = geom.key(0);
    CHECK(*geom.key_at({1.0, first_white.y_max, 0.0}) == 0);

    // black precedence inside black X depth
    const KeySpec& black = geom.key(1);  // A#0
    const Vec3 over_black{black.x_center(), black.y_center(), 0.0};
    CHECK(*geom.key_at(over_black) == 1);
    // same Y at the front of the keyboard falls to a white key
    const Vec3 front{1.0, black.y_center(), 0.0};
    REQUIRE(geom.key_at(front).has_value());
    CHECK_FALSE(geom.key(*geom.key_at(front)).is_black);

    // dense grid: key_at is a function (at most one key), and interior points
    // away from boundaries match the covering key
    int claimed = 0;
    for (double y = 0.5; y < geom.span_y(); y += 7.3) {
        for (double x = 0.5; x < geom.key(0).x_max; x += 11.7) {
            const auto hit = geom.key_at({x, y, 0.0});
            if (hit) ++claimed;
        }
    }
    CHECK(claimed > 0);
}

TEST_CASE("is_pressed thresholds") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const PressThresholds& th = geom.thresholds();

    const KeySpec& white = geom.key(39);  // middle C area, white
    REQUIRE_FALSE(white.is_black);
    const double wx = white.x_center(), wy = white.y_center();
    CHECK(is_pressed({wx, wy, -2.0}, white, th, geom));
    CHECK_FALSE(is_pressed({wx, wy, 0.0}, white, th, geom));
    CHECK(is_pressed({wx, wy, th.white_z}, white, th, geom));  // inclusive

    const KeySpec& black = geom.key(40);  // C#4
    REQUIRE(black.is_black);
    CHECK(is_pressed({black.x_center(), black.y_center(), 10.38}, black, th, geom));
    CHECK_FALSE(is_pressed({black.x_center(), black.y_center(), 11.0}, black, th, geom));

    // monotone in -z
    for (double z = -5.0; z < th.white_z; z += 0.5) {
        CHECK(is_pressed({wx, wy, z}, white, th, geom));
    }

    // contract violation: point not over the key
    CHECK_THROWS_AS(is_pressed({wx, wy + 200.0, -5.0}, white, th, geom), ValidationError);
}

TEST_CASE("region partition") {
    CHECK(region_of(0) == 0);
    CHECK(region_of(14) == 0);
    CHECK(region_of(15) == 1);
    CHECK(region_of(60) == 5);
    CHECK(region_of(75) == 7);
    CHECK(region_of(87) == 7);
    CHECK_THROWS_AS(region_of(-1), std::invalid_argument);
    CHECK_THROWS_AS(region_of(88), std::invalid_argument);

    // covers 0..87 exactly once with the documented boundaries
    int counts[kNumRegions] = {0};
    for (int k = 0; k < kNumKeys; ++k) counts[region_of(k)]++;
    CHECK(counts[0] == 15);
    CHECK(counts[1] == 10);
    CHECK(counts[7] == 13);
}

TEST_CASE("keyboard json round trip") {
    const KeyboardGeometry geom = build_standard_keyboard();
    const std::string text = keyboard_to_json(geom);
    const KeyboardGeometry back = keyboard_from_json(text);
    CHECK(back.keys().size() == 88);
    for (int k = 0; k < kNumKeys; ++k) {
        CHECK(back.key(k).y_min == doctest::Approx(geom.key(k).y_min));
        CHECK(back.key(k).is_black == geom.key(k).is_black);
    }
    CHECK(back.thresholds().white_z == doctest::Approx(-1.19));
    CHECK(back.thresholds().black_z == doctest::Approx(10.38));
}
