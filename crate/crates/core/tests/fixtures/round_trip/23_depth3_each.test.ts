describe('level 1', () => {
  describe('level 2', () => {
    describe.each([['x'], ['y']])('level 3 %s', (v: string) => {
      it('checks value', () => {
        expect(v).toMatch(/^[xy]$/);
      });
      it.skip('skipped at depth 3', () => {});
    });
    it('level 2 test', () => {});
  });
  it('level 1 test', () => {});
});
