/* Synthetic test case
 * Label Definition File: CWE190_Integer_Overflow__synthetic_07.label.xml
 */
package testcases.CWE190_Integer_Overflow;

import testcasesupport.*;

public class CWE190_Integer_Overflow__synthetic_07 extends AbstractTestCase
{
    public void bad() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
    }

    private void goodG2B() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
        IO.writeLine("step 3 {");
        int v4 = 4; /* { brace in comment */
        IO.writeLine("step 5 {");
        IO.writeLine("step 6 {");
        IO.writeLine("step 7 {");
    }

    private void goodB2G() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
        IO.writeLine("step 3 {");
    }

    public void good() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
    }
}
