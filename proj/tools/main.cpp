#include "act/cli.hpp"

int main(int argc, char** argv) { return act::run(argc, argv); }
