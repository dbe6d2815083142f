#include "groups/harness.hpp"

int main(int argc, char** argv) { return groups::cli_main(argc, argv); }
