#include "doctest.h"

TEST_SUITE_BEGIN("graph");
TEST_SUITE_END();
