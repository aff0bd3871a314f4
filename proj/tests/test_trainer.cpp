#include "doctest.h"

TEST_SUITE_BEGIN("trainer");
TEST_SUITE_END();
