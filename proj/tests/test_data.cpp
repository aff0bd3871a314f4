#include "doctest.h"

TEST_SUITE_BEGIN("data");
TEST_SUITE_END();
