#pragma once

#include <doctest.h>

#include "lbss/error.hpp"

// Asserts that `expr` throws lbss::Error carrying `expected`.
#define CHECK_ERROR_CODE(expr, expected)                          \
  do {                                                            \
    bool thrown_ = false;                                         \
    try {                                                         \
      (void)(expr);                                               \
    } catch (const lbss::Error& e_) {                             \
      thrown_ = true;                                             \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());          \
    }                                                             \
    CHECK_MESSAGE(thrown_, "expected lbss::Error from " #expr);   \
  } while (false)
