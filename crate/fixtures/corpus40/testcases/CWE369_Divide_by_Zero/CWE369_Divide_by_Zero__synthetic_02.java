/* Synthetic test case
 * Label Definition File: CWE369_Divide_by_Zero__synthetic_02.label.xml
 */
package testcases.CWE369_Divide_by_Zero;

import testcasesupport.*;

public class CWE369_Divide_by_Zero__synthetic_02 extends AbstractTestCase
{
    public void bad() throws Throwable
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
        int v4 = 4; /* { brace in comment */
        IO.writeLine("step 5 {");
        IO.writeLine("step 6 {");
        IO.writeLine("step 7 {");
    }

    public void good() throws Throwable
    {
        IO.writeLine("step 0 {");
        IO.writeLine("step 1 {");
    }
}
