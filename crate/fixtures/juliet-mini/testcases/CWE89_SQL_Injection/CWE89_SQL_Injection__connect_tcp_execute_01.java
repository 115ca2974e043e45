/* TEMPLATE GENERATED TESTCASE FILE
Filename: CWE89_SQL_Injection__connect_tcp_execute_01.java
*/
package testcases.CWE89_SQL_Injection;

import testcasesupport.*;
import java.sql.*;
public class CWE89_SQL_Injection__connect_tcp_execute_01 extends AbstractTestCase
{
    public void bad() throws Throwable
{
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
        String data = "x"; // {
}

    private void goodG2B() throws Throwable
{
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
        String data = "foo";
}
}
