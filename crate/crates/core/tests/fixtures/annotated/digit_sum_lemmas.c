/*@
  logic integer digit_sum(integer n) =
    n <= 0 ? 0 : n % 10 + digit_sum(n / 10);

  lemma digit_sum_zero: digit_sum(0) == 0;

  lemma digit_sum_step:
    \forall integer n; n > 0 ==> digit_sum(n) == n % 10 + digit_sum(n / 10);
*/

/*@
  requires num >= 0;
  assigns \nothing;
  ensures \result == digit_sum(num);
*/
int func(int num) {
    int sum = 0;
    /*@
      loop invariant num >= 0;
      loop invariant sum + digit_sum(num) == digit_sum(\at(num, Pre));
      loop assigns num, sum;
      loop variant num;
    */
    while (num > 0) {
        sum += num % 10;
        num /= 10;
    }
    return sum;
}
