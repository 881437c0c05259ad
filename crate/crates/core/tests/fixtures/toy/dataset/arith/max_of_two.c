int max_of_two(int a, int b) {
    return a >= b ? a : b;
}
