#include "doctest.h"

TEST_SUITE_BEGIN("commands");
TEST_SUITE_END();
