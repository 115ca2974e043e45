/* Synthetic test case
 * Label Definition File: CWE190_Integer_Overflow__synthetic_27.label.xml
 */
package testcases.CWE190_Integer_Overflow;

import testcasesupport.*;

public class CWE190_Integer_Overflow__synthetic_27 extends AbstractTestCase
{
    public void bad() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
        IO.writeLine("step 3 {");
        int v4 = 4; /* { brace in comment */
        IO.writeLine("step 5 {");
    }

    private void goodG2B() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
        IO.writeLine("step 2 {");
    }

    public void good() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
    }
}
