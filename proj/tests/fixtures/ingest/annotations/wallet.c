/* Asset annotations: a whole function, a nested region and variables. */

static int pin_tries = 3;
#pragma esp var(pin_tries, integrity, weight=0.5)

#pragma esp asset begin(confidentiality, integrity, weight=2.0)
int unlock(const char *pin) {
  int ok = pin[0] == '4' && pin[1] == '2';
  if (!ok) pin_tries--;
  return ok;
}
#pragma esp asset end

int sign(const unsigned char *msg, int n, unsigned char *out) {
  int i;
  unsigned int acc = 0x9e37;
  /* the key never leaves this block */
#pragma esp asset begin(confidentiality, weight=3.0, id=sign_key)
  for (i = 0; i < n; i++) {
    acc = (acc << 5) ^ msg[i];
  }
#pragma esp asset end
  out[0] = (unsigned char)acc;
  return unlock("42") ? 0 : -1;
}

int main(void) {
  unsigned char out[1];
  return sign((const unsigned char *)"m", 1, out);
}
