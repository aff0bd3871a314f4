#include "doctest.h"

TEST_SUITE_BEGIN("tensor");
TEST_SUITE_END();
