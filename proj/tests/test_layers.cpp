#include "doctest.h"

TEST_SUITE_BEGIN("layers");
TEST_SUITE_END();
