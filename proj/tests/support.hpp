#pragma once

#include <doctest.h>

#include <functional>

#include "artss/error.hpp"

// Code of the artss::Error thrown by fn; fails the test if none is thrown.
inline artss::ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const artss::Error& e) {
        return e.code();
    }
    FAIL("expected an artss::Error");
    return artss::ErrorCode::Io;
}
